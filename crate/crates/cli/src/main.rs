mod commands;
mod config;
mod error;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RawConfig;
use error::CliError;

/// Experiments with per-instance confusing probabilities for noisy labels.
#[derive(Parser)]
#[command(name = "confnoise", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// INI config file; every key has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.epochs=100`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set run.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Gaussian task, corrupt its training labels and write the splits.
    Synth(Common),
    /// Train a naive classifier and write the noisy-label probabilities.
    EstimatePsi(Common),
    /// Train in the configured mode (method, naive or clean-mix).
    Train(Common),
    /// Report accuracy of a checkpoint on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to the run's final checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to the test split.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score confusing probabilities as a detector of corrupted labels.
    EtaReport {
        #[command(flatten)]
        common: Common,
        /// Defaults to the run's eta.csv.
        #[arg(long)]
        eta: Option<PathBuf>,
        /// Defaults to the training split.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

impl Common {
    fn resolve(&self) -> Result<config::RunConfig, CliError> {
        let mut raw = RawConfig::load(self.config.as_deref())?;
        for o in &self.overrides {
            raw.set(o)?;
        }
        if let Some(seed) = self.seed {
            raw.set(&format!("run.seed={seed}"))?;
        }
        raw.resolve()
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(c) => commands::synth(&c.resolve()?),
        Command::EstimatePsi(c) => commands::estimate(&c.resolve()?),
        Command::Train(c) => commands::train(&c.resolve()?),
        Command::Eval {
            common,
            checkpoint,
            data,
        } => commands::eval(&common.resolve()?, checkpoint, data),
        Command::EtaReport { common, eta, data } => {
            commands::eta_report(&common.resolve()?, eta, data)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
