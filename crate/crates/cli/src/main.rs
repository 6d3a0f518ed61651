//! `sgd-clt`: run SGD ensemble experiments from TOML configs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::RunOptions;
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "sgd-clt", version, about = "SGD ensemble experiments: limit covariances, normality and time averages")]
struct Cli {
    /// Worker threads for the replica pool.
    #[arg(long, global = true, env = "SGD_CLT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts and manifest.
    Run {
        config: PathBuf,
        /// Enforce the `[check]` thresholds (exit 4 on failure).
        #[arg(long)]
        check: bool,
        /// Output directory, overriding `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the learning-rate (and damping) certificate as JSON.
    Certify {
        config: PathBuf,
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Print W*, λ_D, h_D and the d₀ admissibility check as JSON.
    Wstar { config: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Run { config, check, out } => {
            let manifest = commands::run(&config, &RunOptions { check, out })?;
            println!("{}", manifest.display());
        }
        Command::Certify { config, horizon } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}", serde_json::to_string_pretty(&commands::certify(&cfg, horizon)?)?);
        }
        Command::Wstar { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}", serde_json::to_string_pretty(&commands::wstar(&cfg)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.category(), "message": e.to_string() }));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
