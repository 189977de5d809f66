//! Experiment driver: configuration, runs, artifacts and the acceptance suite.

use std::fmt::Display;
use std::path::Path;

pub mod acceptance;
pub mod config;
pub mod experiment;
pub mod fit;
pub mod oracle;
pub mod report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] deepo_core::Error),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

impl CliError {
    pub fn io(path: &Path, e: impl Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        }
    }

    /// Process exit code. Assertion failures use 2 and are reported separately.
    pub fn exit_code(&self) -> i32 {
        1
    }
}
