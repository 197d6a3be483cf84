use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

const CONFIG: &str = "\
# small smoke scenario
seed = 11
n_benign = 3
n_hostile = 1
duration = 900
";

fn sentry(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentry"))
        .args(args)
        .env_remove("SENTRY_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

/// Simulates `count` scenarios, trains on them and runs the first one; returns the report path.
fn pipeline(dir: &Path, count: usize) -> std::path::PathBuf {
    let cfg = dir.join("scenario.conf");
    std::fs::write(&cfg, CONFIG).unwrap();
    let count = count.to_string();
    assert_ok(&sentry(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.join("scen")),
        "--count",
        &count,
        "--alternate",
    ]));
    let model = dir.join("model.txt");
    assert_ok(&sentry(&[
        "train",
        "--scenarios",
        s(&dir.join("scen")),
        "--out",
        s(&model),
        "--seed",
        "5",
        "--epochs",
        "5",
    ]));
    let first = dir.join("scen").join("scenario_0000");
    let report = dir.join("reports").join("first.json");
    assert_ok(&sentry(&[
        "run",
        "--model",
        s(&model),
        "--frames",
        s(&first.join("frames.jsonl")),
        "--truth",
        s(&first.join("truth.jsonl")),
        "--theta",
        "0.7",
        "--out",
        s(&report),
    ]));
    report
}

#[test]
fn twenty_scenarios_end_to_end_under_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let cfg = dir.path().join("scenario.conf");
    std::fs::write(&cfg, CONFIG).unwrap();
    let scen = dir.path().join("scen");
    assert_ok(&sentry(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&scen),
        "--count",
        "20",
        "--alternate",
    ]));
    let model = dir.path().join("model.txt");
    assert_ok(&sentry(&[
        "train",
        "--scenarios",
        s(&scen),
        "--out",
        s(&model),
        "--seed",
        "1",
        "--epochs",
        "10",
        "--workers",
        "4",
    ]));
    let reports = dir.path().join("reports");
    for k in 0..20 {
        let d = scen.join(format!("scenario_{k:04}"));
        let out = reports.join(format!("r{k:02}.json"));
        assert_ok(&sentry(&[
            "run",
            "--model",
            s(&model),
            "--frames",
            s(&d.join("frames.jsonl")),
            "--truth",
            s(&d.join("truth.jsonl")),
            "--out",
            s(&out),
        ]));
    }
    let eval = dir.path().join("eval.json");
    assert_ok(&sentry(&["evaluate", "--reports", s(&reports), "--out", s(&eval)]));
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&eval).unwrap()).unwrap();
    assert_eq!(parsed["scenarios"].as_array().unwrap().len(), 20);
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn replay_after_run_succeeds_and_tampering_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let report = pipeline(dir.path(), 2);
    assert_eq!(code(&sentry(&["replay", "--report", s(&report)])), 0);
    assert_eq!(
        code(&sentry(&[
            "replay",
            "--report",
            s(&report),
            "--repeat",
            "3",
            "--workers",
            "4"
        ])),
        0
    );

    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let events = value["events"].as_array_mut().unwrap();
    events
        .push(serde_json::json!({"event": "alert", "object_id": 99, "timestamp": 1.0, "p": 0.99, "source": "neural"}));
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, value.to_string()).unwrap();
    let out = sentry(&["replay", "--report", s(&tampered)]);
    assert_eq!(code(&out), 6);
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
}

#[test]
fn outputs_are_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), 3);
    pipeline(b.path(), 3);
    for rel in [
        "scen/scenario_0001/frames.jsonl",
        "scen/scenario_0001/truth.jsonl",
        "model.txt",
        "model.txt.replay.jsonl",
        "reports/first.scores.csv",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(rel)).unwrap(),
            std::fs::read(b.path().join(rel)).unwrap(),
            "{rel}"
        );
    }
    let events = |p: &Path| {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(p.join("reports/first.json")).unwrap()).unwrap();
        v["events"].clone()
    };
    assert_eq!(events(a.path()), events(b.path()));
}

#[test]
fn seed_environment_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.conf");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sentry"))
        .args(["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))])
        .env("SENTRY_SEED", "4242")
        .output()
        .unwrap();
    assert_ok(&out);
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/config.json")).unwrap()).unwrap();
    assert_eq!(written["seed"], 4242);
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let report = pipeline(dir.path(), 2);
    let model = dir.path().join("model.txt");
    let first = dir.path().join("scen/scenario_0000");

    // usage
    assert_eq!(code(&sentry(&["frobnicate"])), 2);
    assert_eq!(code(&sentry(&["run", "--model", s(&model)])), 2);
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = sentry(&[
        "evaluate",
        "--reports",
        s(&empty),
        "--out",
        s(&dir.path().join("e.json")),
    ]);
    assert_eq!(code(&out), 2);

    // i/o
    let missing = dir.path().join("missing.txt");
    let out = sentry(&[
        "run",
        "--model",
        s(&missing),
        "--frames",
        s(&first.join("frames.jsonl")),
        "--out",
        s(&dir.path().join("x.json")),
    ]);
    assert_eq!(code(&out), 3);
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);

    // format
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "t=5; (1,2)\nnot a frame\n").unwrap();
    let config = first.join("config.json");
    let y = dir.path().join("y.json");
    let run_bad = |frames: &Path, truth: Option<&Path>| {
        let mut args = vec![
            "run",
            "--model",
            s(&model),
            "--frames",
            s(frames),
            "--config",
            s(&config),
        ];
        if let Some(t) = truth {
            args.extend(["--truth", s(t)]);
        }
        args.extend(["--out", s(&y)]);
        code(&sentry(&args))
    };
    assert_eq!(run_bad(&bad, None), 4);

    // dimension: truth covers more frames than the stream
    let short = dir.path().join("short.jsonl");
    let frames = std::fs::read_to_string(first.join("frames.jsonl")).unwrap();
    std::fs::write(&short, frames.lines().take(4).collect::<Vec<_>>().join("\n")).unwrap();
    assert_eq!(run_bad(&short, Some(&first.join("truth.jsonl"))), 5);
    // dimension: a well-formed model whose input width does not fit its slot count
    let wrong = dir.path().join("wrong.txt");
    let params = 10 * 2 + 2 + 2 * 3 + 3;
    std::fs::write(&wrong, format!("mlp 10 2 3\n{}", "0.0\n".repeat(params))).unwrap();
    let out = sentry(&[
        "run",
        "--model",
        s(&wrong),
        "--frames",
        s(&first.join("frames.jsonl")),
        "--out",
        s(&dir.path().join("z.json")),
    ]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));

    // the report itself still replays
    assert_eq!(code(&sentry(&["replay", "--report", s(&report)])), 0);
}
