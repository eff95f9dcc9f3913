//! `vpr` command-line driver: simulate traverse pairs, match them, and turn
//! the matches into recall curves and parameter sweeps.

pub mod commands;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use vpr_core::VprError;

pub use commands::{
    cmd_evaluate, cmd_match, cmd_simulate, cmd_speed, cmd_sweep, EvaluateArgs, MatchArgs,
    SimulateArgs, SpeedArgs, SweepArgs,
};

/// Default number of retrieval candidates.
pub const DEFAULT_N: usize = 5;
/// Default sequence length `l`.
pub const DEFAULT_L: usize = 12;
/// Default depth threshold when query and reference conditions differ.
pub const DEFAULT_D_CROSS: f64 = 10.0;
/// Default depth threshold when both traverses share a condition label.
pub const DEFAULT_D_SAME: f64 = 50.0;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_IO: i32 = 4;

const EXIT_HELP: &str = "\
Exit status:
  0  success
  2  usage error (bad flags, bad config keys, odd sequence length)
  3  validation error (malformed traverse directory or CSV input)
  4  I/O error (unreadable input, unwritable output)

Environment:
  VPR_THREADS  positive integer capping internal parallelism";

#[derive(Debug, Parser)]
#[command(name = "vpr", version, about = "Opposing-viewpoint place recognition toolkit", after_help = EXIT_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a world and render forward and reverse traverses under two conditions.
    Simulate(SimulateArgs),
    /// Match every query frame against the reference traverse.
    Match(MatchArgs),
    /// Recall-at-radius curve for a matches CSV.
    Evaluate(EvaluateArgs),
    /// Recall over a grid of depth thresholds and sequence lengths.
    Sweep(SweepArgs),
    /// One sweep surface per reference stride.
    Speed(SpeedArgs),
}

/// Query and reference traverse directories.
#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<VprError> for CliError {
    fn from(e: VprError) -> Self {
        match e {
            VprError::Config { .. } | VprError::Contract(_) => CliError::Usage(e.to_string()),
            VprError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Worker count from `VPR_THREADS`, if set.
pub fn thread_cap(value: Option<&str>) -> CliResult<Option<usize>> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "VPR_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

/// Runs a parsed command, honouring `threads` as a cap on the worker pool.
pub fn run(cli: Cli, threads: Option<usize>) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(drop),
        Command::Match(a) => cmd_match(&a).map(drop),
        Command::Evaluate(a) => cmd_evaluate(&a).map(drop),
        Command::Sweep(a) => cmd_sweep(&a).map(drop),
        Command::Speed(a) => cmd_speed(&a).map(drop),
    })
}
