//! Command-line front end for `ghostpol`: TOML experiment configs, the
//! `sweep`, `discriminate`, `tomo` and `optimize` pipelines, and CSV/SVG
//! output.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid or unreadable configuration; exit code 2.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ghostpol::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Sweep,
    Discriminate,
    Tomo,
    Optimize,
}

/// Load the config, apply command-line overrides and run one command.
pub fn run(
    command: Command,
    config: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<commands::Outcome, CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output.dir = o.to_path_buf();
    }
    log::info!(
        "{command:?} with seed {} into {}",
        cfg.seed,
        cfg.output.dir.display()
    );
    match command {
        Command::Sweep => commands::sweep(&cfg),
        Command::Discriminate => commands::discriminate(&cfg),
        Command::Tomo => commands::tomo(&cfg),
        Command::Optimize => commands::optimize_cmd(&cfg),
    }
}
