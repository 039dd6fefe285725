//! Command-line front end for the dlrlab experiments: configuration
//! resolution, run manifests, and CSV/JSON artifacts.

pub mod artifacts;
pub mod commands;
pub mod config;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_GOAL_NOT_MET: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] dlrlab_core::Error),
}
