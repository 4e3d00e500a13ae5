//! `abr`: trace-driven ABR experiment harness. Synthesizes UAV-like
//! throughput corpora, derives sensor quantization thresholds, trains the
//! actor-critic agent, and compares it against rule-based baselines,
//! emitting plot-ready CSV reports.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

/// Command outcome classification for exit codes: 2 for configuration
/// problems, 3 for runtime failures.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Runtime(msg) => write!(f, "error: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "abr", version, about = "Trace-driven ABR streaming experiments over UAV-like links")]
struct Cli {
    /// JSON configuration file; defaults apply for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file's seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Parallel experience workers for training.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace corpus.
    Synth {
        /// Number of traces to generate.
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Trace duration in seconds (overrides the config).
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Derive sensor quantization thresholds from a corpus.
    DeriveThresholds {
        /// Trace corpus directory or file.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Sensor to derive thresholds for: distance, velocity, or accel.
        #[arg(long)]
        sensor: String,
    },
    /// Train the actor-critic agent on a corpus (80/20 split by seed).
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Evaluate a trained checkpoint on a corpus.
    Eval {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Checkpoint produced by `train` (expects its .json sidecar).
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare policies on an identical episode set.
    Compare {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Comma-separated list: fixed:<level>, buffer, rate, mpc,
        /// agent:<checkpoint>.
        #[arg(long)]
        policies: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(
        cli.config.as_deref(),
        cli.seed,
        cli.out.as_deref(),
        cli.workers,
    )?;
    match &cli.command {
        Command::Synth { count, duration } => commands::cmd_synth(&cfg, *count, *duration),
        Command::DeriveThresholds { corpus, sensor } => {
            commands::cmd_derive_thresholds(&cfg, corpus.as_deref(), sensor)
        }
        Command::Train { corpus } => commands::cmd_train(&cfg, corpus.as_deref()),
        Command::Eval { corpus, checkpoint } => commands::cmd_eval(&cfg, corpus.as_deref(), checkpoint),
        Command::Compare { corpus, policies } => {
            commands::cmd_compare(&cfg, corpus.as_deref(), policies)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ CliError::Config(_)) => {
            eprintln!("{err}");
            ExitCode::from(2)
        }
        Err(err @ CliError::Runtime(_)) => {
            eprintln!("{err}");
            ExitCode::from(3)
        }
    }
}
