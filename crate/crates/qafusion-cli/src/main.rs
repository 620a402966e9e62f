//! `qafusion`: command-line pipelines for query-adaptive late fusion.
//!
//! Subcommands compose through files only:
//! `synth` makes benchmarks, `build-ref` builds reference codebooks, `fuse`
//! produces fused rankings, `train` fits the supervised weight network,
//! `eval` scores ranking files, `compare` runs several fusion methods side
//! by side. Every run is deterministic given its config.

mod artifacts;
mod commands;
mod config;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

/// Errors classified by exit code: usage/config 1, data contract 2,
/// internal invariant 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("internal invariant failure: {0}")]
    Internal(String),
}

impl From<qafusion::Error> for CliError {
    fn from(e: qafusion::Error) -> Self {
        match e {
            qafusion::Error::InvalidParameter(_) => CliError::Usage(e.to_string()),
            qafusion::Error::Internal(_) => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

/// Fail with a usage error if an input file is missing.
pub(crate) fn require_file(path: &std::path::Path, what: &str) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(())
}

#[derive(Parser)]
#[command(
    name = "qafusion",
    version,
    about = "Query-adaptive late fusion of retrieval score lists"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-feature benchmark from a spec file.
    Synth(commands::synth::SynthArgs),
    /// Build a reference codebook from an irrelevant-corpus score file.
    BuildRef(commands::build_ref::BuildRefArgs),
    /// Fuse per-feature scores into a ranking file.
    Fuse(commands::fuse::FuseArgs),
    /// Train the supervised weight-prediction network.
    Train(commands::train::TrainArgs),
    /// Evaluate a ranking file against qrels.
    Eval(commands::eval::EvalArgs),
    /// Run several fusion methods on the same inputs and tabulate metrics.
    Compare(commands::compare::CompareArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::BuildRef(args) => commands::build_ref::run(args),
        Command::Fuse(args) => commands::fuse::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Compare(args) => commands::compare::run(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
