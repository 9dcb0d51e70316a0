//! Command-line front end for running, evaluating and comparing experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mbrl::harness::{compare, evaluate_checkpoint, load_config, load_task_config, run_experiment};

/// Verbosity is read from this variable, using `env_logger` filter syntax.
const LOG_ENV: &str = "MBRL_LOG";

#[derive(Debug, Parser)]
#[command(name = "mbrl", version, about = "Model-based reinforcement learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write metrics, config and checkpoint to --out.
    Run {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        agent: PathBuf,
        /// Environment model configuration (model-based agents only).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Overrides the protocol seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved checkpoint on a task.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        /// Evaluation seed; defaults to the seed of the saved run.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare finished runs that share task and protocol configuration.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Report the first step whose evaluation return reaches this value.
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<f64>,
    },
}

fn run(cli: Cli) -> mbrl::Result<()> {
    match cli.command {
        Command::Run {
            task,
            protocol,
            agent,
            model,
            seed,
            out,
        } => {
            let mut config = load_config(&task, &protocol, &agent, model.as_deref())?;
            if let Some(s) = seed {
                config.protocol.seed = s;
            }
            let metrics = run_experiment(&config, &out)?;
            println!("{}", metrics.display());
        }
        Command::Evaluate {
            checkpoint,
            task,
            episodes,
            seed,
        } => {
            if episodes == 0 {
                return Err(mbrl::Error::Usage("--episodes must be at least 1".into()));
            }
            let task = load_task_config(&task)?;
            let (mean, std) = evaluate_checkpoint(&checkpoint, Some(&task), episodes, seed)?;
            println!("eval_return_mean={mean}");
            println!("eval_return_std={std}");
        }
        Command::Compare { dirs, threshold } => {
            print!("{}", compare(&dirs, threshold)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
