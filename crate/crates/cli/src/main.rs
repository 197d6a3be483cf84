use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sentry_cli::{CliError, RunArgs, SimulateArgs, TrainArgs};

#[derive(Parser)]
#[command(name = "sentry", version, about = "Hostile-intent detection over radar plot streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenarios with ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Give every other scenario no hostile objects.
        #[arg(long)]
        alternate: bool,
    },
    /// Train the network on labeled scenarios.
    Train {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 8)]
        max_objects: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run the engine over a frame stream.
    Run {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Scenario config; defaults to config.json beside the frames.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.7)]
        theta: f64,
        #[arg(long)]
        out: PathBuf,
        /// Disable oracle-driven online retraining.
        #[arg(long)]
        no_retrain: bool,
    },
    /// Aggregate run reports.
    Evaluate {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Re-execute a recorded run and check the event stream is identical.
    Replay {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate {
            config,
            out,
            count,
            alternate,
        } => {
            let dirs = sentry_cli::simulate(&SimulateArgs {
                config,
                out,
                count,
                alternate,
            })?;
            eprintln!("wrote {} scenario(s)", dirs.len());
        }
        Command::Train {
            scenarios,
            out,
            seed,
            epochs,
            hidden,
            lr,
            batch,
            max_objects,
            workers,
        } => {
            let s = sentry_cli::train(&TrainArgs {
                scenarios,
                out,
                seed,
                epochs,
                hidden,
                learning_rate: lr,
                batch_size: batch,
                max_objects,
                workers,
            })?;
            eprintln!(
                "trained on {} examples from {} scenarios, loss {:.4}",
                s.examples, s.scenarios, s.loss
            );
        }
        Command::Run {
            model,
            frames,
            truth,
            config,
            theta,
            out,
            no_retrain,
        } => {
            let r = sentry_cli::run(&RunArgs {
                model,
                frames,
                truth,
                config,
                theta,
                out,
                retrain: !no_retrain,
            })?;
            eprintln!(
                "{} frames, {} alerts, {} misses",
                r.frames,
                r.alerts.len(),
                r.misses.len()
            );
        }
        Command::Evaluate { reports, out, theta } => {
            let e = sentry_cli::evaluate_dir(&reports, &out, theta)?;
            match e.roc_auc {
                Some(auc) => eprintln!("{} scenarios, roc auc {auc:.4}", e.scenarios.len()),
                None => eprintln!("{} scenarios, roc auc undefined (single class)", e.scenarios.len()),
            }
        }
        Command::Replay {
            report,
            repeat,
            workers,
        } => {
            let n = sentry_cli::replay(&report, repeat, workers)?;
            eprintln!("replay ok: {n} identical run(s)");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { sentry_cli::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sentry: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
