//! Command-line experiment runner: reaching comparisons, virtual rig
//! sweeps and analytic damping curves, all written as CSV.

pub mod config;
pub mod curves;
pub mod reach;
pub mod sweep;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("solver did not converge for: {}", .0.join(", "))]
    NotConverged(Vec<String>),
    #[error("simulation diverged: {0}")]
    Diverged(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Usage(_) => 2,
            Self::NotConverged(_) => 3,
            Self::Diverged(_) => 4,
            Self::Io { .. } => 1,
        }
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_owned(),
        source,
    }
}

pub(crate) fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}
