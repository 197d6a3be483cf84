//! Subcommands of the `sentry` binary: simulate, train, run, evaluate, replay.

use std::fs;
use std::path::{Path, PathBuf};

use sentry_core::engine::{events_json, scores_csv, EngineConfig, RunInputs, RunJob, RunReport};
use sentry_core::sim::{generate, label_examples, GroundTruth, ScenarioConfig};
use sentry_core::track::{frames_to_jsonl, parse_frames, Frame};
use sentry_core::{evaluate, EngineState, LabeledExample, Mlp, TrainConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;
pub const EXIT_DIMENSION: i32 = 5;
pub const EXIT_AUDIT: i32 = 6;

pub const SEED_ENV: &str = "SENTRY_SEED";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(PathBuf, std::io::Error),
    Format(String),
    Dimension(String),
    Audit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(..) => EXIT_IO,
            CliError::Format(_) => EXIT_FORMAT,
            CliError::Dimension(_) => EXIT_DIMENSION,
            CliError::Audit(_) => EXIT_AUDIT,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(p, e) => write!(f, "i/o error: {}: {e}", p.display()),
            CliError::Format(m) => write!(f, "format error: {m}"),
            CliError::Dimension(m) => write!(f, "dimension mismatch: {m}"),
            CliError::Audit(m) => write!(f, "determinism audit failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

fn core_err(context: &Path) -> impl Fn(sentry_core::Error) -> CliError + '_ {
    move |e| match e {
        sentry_core::Error::Dimension { .. } => CliError::Dimension(format!("{}: {e}", context.display())),
        sentry_core::Error::EmptyInput(_) => CliError::Usage(format!("{}: {e}", context.display())),
        _ => CliError::Format(format!("{}: {e}", context.display())),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Seed override from `SENTRY_SEED`, if set.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

pub fn load_config(path: &Path) -> CliResult<ScenarioConfig> {
    let cfg = ScenarioConfig::parse(&read(path)?).map_err(core_err(path))?;
    cfg.validate().map_err(core_err(path))?;
    Ok(cfg)
}

pub fn load_frames(path: &Path) -> CliResult<Vec<Frame>> {
    parse_frames(&read(path)?).map_err(core_err(path))
}

pub fn load_truth(path: &Path) -> CliResult<GroundTruth> {
    GroundTruth::from_jsonl(&read(path)?).map_err(core_err(path))
}

pub fn load_model(path: &Path) -> CliResult<Mlp> {
    Mlp::from_checkpoint(&read(path)?).map_err(core_err(path))
}

fn replay_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".replay.jsonl");
    PathBuf::from(s)
}

/// Replay examples saved next to a model, if present.
pub fn load_replay(model: &Path) -> CliResult<Vec<LabeledExample>> {
    let path = replay_path(model);
    if !path.exists() {
        return Ok(Vec::new());
    }
    read(&path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Format(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub count: usize,
    /// With `count > 1`, every other scenario gets no hostile objects.
    pub alternate: bool,
}

/// Writes `config.json`, `frames.jsonl` and `truth.jsonl`; with `count > 1`, one
/// `scenario_NNNN` subdirectory per scenario with seeds `seed, seed+1, ...`.
pub fn simulate(args: &SimulateArgs) -> CliResult<Vec<PathBuf>> {
    let mut base = load_config(&args.config)?;
    if let Some(seed) = env_seed()? {
        base.seed = seed;
    }
    if args.count == 0 {
        return Err(CliError::Usage("--count must be >= 1".into()));
    }
    let mut dirs = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let mut cfg = base.clone();
        cfg.seed = base.seed.wrapping_add(i as u64);
        if args.alternate && i % 2 == 1 {
            cfg.n_hostile = 0;
        }
        let dir = if args.count == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("scenario_{i:04}"))
        };
        let (frames, truth) = generate(&cfg).map_err(core_err(&args.config))?;
        write(&dir.join("config.json"), &cfg.to_json())?;
        write(&dir.join("frames.jsonl"), &frames_to_jsonl(&frames))?;
        write(&dir.join("truth.jsonl"), &truth.to_jsonl())?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Scenario directories under `root` (or `root` itself), sorted by path.
pub fn scenario_dirs(root: &Path) -> CliResult<Vec<PathBuf>> {
    if root.join("frames.jsonl").exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| CliError::Io(root.to_path_buf(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("frames.jsonl").exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Usage(format!("no scenarios under {}", root.display())));
    }
    Ok(dirs)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub scenarios: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub epochs: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_objects: usize,
    pub workers: usize,
}

pub struct TrainSummary {
    pub scenarios: usize,
    pub examples: usize,
    pub loss: f64,
}

const REPLAY_SAVE: usize = 512;

pub fn train(args: &TrainArgs) -> CliResult<TrainSummary> {
    let seed = env_seed()?.unwrap_or(args.seed);
    let dirs = scenario_dirs(&args.scenarios)?;
    let pool = rayon_pool(args.workers)?;
    let per_scenario: Vec<CliResult<Vec<LabeledExample>>> = pool.install(|| {
        use rayon::prelude::*;
        dirs.par_iter()
            .map(|dir| {
                let cfg = load_config(&dir.join("config.json"))?;
                let frames = load_frames(&dir.join("frames.jsonl"))?;
                let truth = load_truth(&dir.join("truth.jsonl"))?;
                label_examples(&frames, &truth, &cfg.pipeline(args.max_objects)).map_err(core_err(dir))
            })
            .collect()
    });
    let mut data = Vec::new();
    for r in per_scenario {
        data.extend(r?);
    }
    if data.is_empty() {
        return Err(CliError::Usage(
            "no labeled examples: no object ever entered a target zone".into(),
        ));
    }
    let input_dim = data[0].input.len();
    let mut mlp = Mlp::new(input_dim, args.hidden, args.max_objects, seed);
    let cfg = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        seed,
        batch_size: args.batch_size,
    };
    mlp.train(&data, &cfg).map_err(core_err(&args.scenarios))?;
    let loss = mlp.mean_loss(&data).map_err(core_err(&args.scenarios))?;
    write(&args.out, &mlp.to_checkpoint())?;

    let stride = data.len().div_ceil(REPLAY_SAVE).max(1);
    let mut replay = String::new();
    for ex in data.iter().step_by(stride) {
        replay.push_str(&serde_json::to_string(ex).expect("example serializes"));
        replay.push('\n');
    }
    write(&replay_path(&args.out), &replay)?;
    Ok(TrainSummary {
        scenarios: dirs.len(),
        examples: data.len(),
        loss,
    })
}

fn rayon_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub model: PathBuf,
    pub frames: PathBuf,
    pub truth: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub theta: f64,
    pub out: PathBuf,
    pub retrain: bool,
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    fs::canonicalize(p).map_err(|e| CliError::Io(p.to_path_buf(), e))
}

/// Everything an engine run needs, loaded from disk.
struct Loaded {
    cfg: EngineConfig,
    seed: u64,
    mlp: Mlp,
    replay: Vec<LabeledExample>,
    frames: Vec<Frame>,
    truth: Option<GroundTruth>,
}

fn load_run(inputs: &RunInputs, theta: f64) -> CliResult<Loaded> {
    let frames_path = Path::new(&inputs.frames);
    let config_path = match &inputs.config {
        Some(c) => PathBuf::from(c),
        None => frames_path.with_file_name("config.json"),
    };
    let scenario = load_config(&config_path)?;
    let mlp = load_model(Path::new(&inputs.model))?;
    let mut cfg = EngineConfig::new(scenario.pipeline(mlp.output_dim()));
    cfg.theta = theta;
    let truth = inputs.truth.as_ref().map(|t| load_truth(Path::new(t))).transpose()?;
    Ok(Loaded {
        cfg,
        seed: scenario.seed,
        replay: load_replay(Path::new(&inputs.model))?,
        mlp,
        frames: load_frames(frames_path)?,
        truth,
    })
}

/// Executes the engine over one frames file and writes the JSON report plus a
/// per-frame score CSV next to it.
pub fn run(args: &RunArgs) -> CliResult<RunReport> {
    if !(args.theta > 0.0 && args.theta < 1.0) {
        return Err(CliError::Usage(format!("--theta must be in (0,1), got {}", args.theta)));
    }
    let inputs = RunInputs {
        model: absolute(&args.model)?.display().to_string(),
        frames: absolute(&args.frames)?.display().to_string(),
        truth: args
            .truth
            .as_deref()
            .map(absolute)
            .transpose()?
            .map(|p| p.display().to_string()),
        config: args
            .config
            .as_deref()
            .map(absolute)
            .transpose()?
            .map(|p| p.display().to_string()),
        retrain: args.retrain,
    };
    let loaded = load_run(&inputs, args.theta)?;
    let mut state = EngineState::new(loaded.cfg.clone(), loaded.mlp.clone())
        .map_err(core_err(&args.model))?
        .with_replay(loaded.replay.iter().cloned());
    let mut report = sentry_core::run(&mut state, &loaded.frames, loaded.truth.as_ref(), inputs.retrain)
        .map_err(core_err(&args.frames))?;
    report.seed = Some(loaded.seed);
    report.inputs = Some(inputs);

    let csv_path = args.out.with_extension("scores.csv");
    write(&csv_path, &scores_csv(state.scores()))?;
    report.scores_csv = Some(csv_path.display().to_string());
    write(&args.out, &report.to_json())?;
    Ok(report)
}

/// Reads every `*.json` run report directly under `dir`, sorted by file name.
pub fn load_reports(dir: &Path) -> CliResult<Vec<(String, RunReport)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Io(dir.to_path_buf(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let r = RunReport::from_json(&read(&p)?).map_err(core_err(&p))?;
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, r))
        })
        .collect()
}

pub fn evaluate_dir(reports: &Path, out: &Path, theta: Option<f64>) -> CliResult<sentry_core::EvalReport> {
    let named = load_reports(reports)?;
    if named.is_empty() {
        return Err(CliError::Usage(format!("no run reports in {}", reports.display())));
    }
    let theta = theta.unwrap_or(named[0].1.theta);
    let eval = evaluate(&named, theta).map_err(core_err(reports))?;
    write(out, &serde_json::to_string_pretty(&eval).expect("eval serializes"))?;
    Ok(eval)
}

/// Re-executes a report's run `repeat` times on `workers` threads and checks every
/// event stream against the recorded one byte for byte.
pub fn replay(report_path: &Path, repeat: usize, workers: usize) -> CliResult<usize> {
    let recorded = RunReport::from_json(&read(report_path)?).map_err(core_err(report_path))?;
    let inputs = recorded
        .inputs
        .clone()
        .ok_or_else(|| CliError::Format(format!("{}: report has no recorded inputs", report_path.display())))?;
    let loaded = load_run(&inputs, recorded.theta)?;
    let expected = recorded.events_json();
    let jobs: Vec<RunJob<'_>> = (0..repeat.max(1))
        .map(|_| RunJob {
            cfg: loaded.cfg.clone(),
            frames: &loaded.frames,
            truth: loaded.truth.as_ref(),
            retrain: inputs.retrain,
            seed: Some(loaded.seed),
        })
        .collect();
    let reports = sentry_core::run_many(&jobs, &loaded.mlp, &loaded.replay, workers)
        .map_err(core_err(Path::new(&inputs.frames)))?;
    for (i, r) in reports.iter().enumerate() {
        let got = events_json(&r.events);
        if got != expected {
            let line = expected
                .lines()
                .zip(got.lines())
                .position(|(a, b)| a != b)
                .unwrap_or_else(|| expected.lines().count().min(got.lines().count()));
            return Err(CliError::Audit(format!(
                "repetition {i}: event stream diverges at event {line}"
            )));
        }
    }
    Ok(reports.len())
}
