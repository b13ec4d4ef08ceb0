//! `cfree`: scenario generation, dataset labeling, training, evaluation,
//! planning and benchmarking from the command line.
//!
//! Failures print `error: <code>: <message>` on stderr and exit with 2
//! (usage), 3 (data), 4 (model) or 5 (planning).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cfree_core::Error;

#[derive(Debug, Parser)]
#[command(name = "cfree", version, about = "Latent-space path planning for a two-link arm")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Configuration override; repeatable; beats the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Global seed recorded in every artifact.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Random obstacle scenarios (plus the empty one) as JSON.
    GenScenarios {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Labeled 5° joint grids for every scenario.
    GenDataset {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains one model on a fold's training scenarios (or `empty`).
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fold: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Grid-based IoU / precision on the fold's train and test scenarios.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dtheta: Option<f64>,
        /// Defaults to the fold recorded in the checkpoint.
        #[arg(long)]
        fold: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plans between two joint configurations through the latent space.
    Plan {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scenario: u32,
        /// `θ1,θ2` in degrees.
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        #[arg(long, allow_hyphen_values = true)]
        goal: String,
        #[arg(long, default_value = "astar")]
        method: String,
        /// Scenario JSON; `--data DIR` reads `DIR/scenarios.json`.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Planning-time scalability against obstacle count.
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        /// Scenario JSON; without it a nested sweep is generated.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Obstacle counts of the generated sweep.
        #[arg(long, default_value = "1,2,4,8")]
        sweep: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config(_) | Error::Range(_) => 2,
        Error::Data(_) | Error::Shape(_) | Error::Generation(_) | Error::Io(_) | Error::Json(_) => 3,
        Error::Model(_) | Error::Diverged(_) => 4,
        Error::Planning(_) => 5,
    }
}

fn report(code: &str, message: &str) {
    eprintln!("error: {code}: {}", message.replace('\n', " "));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            report("usage", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.code(), &e.to_string());
            ExitCode::from(exit_code(&e))
        }
    }
}
