//! Command-line front end: graph building, training, evaluation, gradient
//! checking, synthetic data and loss ablations.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use bncl::ErrorKind;
use clap::{Parser, Subcommand};

pub use config::{RunConfig, RunFlags};

pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("[{stage}] {source}")]
    Core {
        stage: &'static str,
        #[source]
        source: bncl::Error,
    },
    #[error("[io] {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("[validation] {0}")]
    Validation(String),
    #[error("[gradcheck] {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn core(stage: &'static str, source: bncl::Error) -> Self {
        CliError::Core { stage, source }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core { source, .. } => match source.kind() {
                ErrorKind::Numeric => EXIT_NUMERIC,
                ErrorKind::Io => EXIT_IO,
                ErrorKind::Validation => EXIT_VALIDATION,
            },
            CliError::Io { .. } => EXIT_IO,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::CheckFailed(_) => EXIT_NUMERIC,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bncl",
    version,
    about = "Balanced neighbourhood collective learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the signed label graph and print edge counts.
    Graph(commands::GraphArgs),
    /// Train and write checkpoint.bin, history.json and config.json.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint next to the zero-shot baseline.
    Eval(commands::EvalArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(commands::GradcheckArgs),
    /// Write a synthetic dataset as interchange files.
    Synth(commands::SynthArgs),
    /// Train and evaluate with L2 and/or L3 removed.
    Ablate(commands::AblateArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Graph(a) => commands::graph(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Ablate(a) => commands::ablate(&a),
    }
}
