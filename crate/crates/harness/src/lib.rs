//! File formats, checkpoints and run orchestration around `eat_hrl_core`.

pub mod checkpoint;
pub mod formats;
pub mod orchestrate;

pub use eat_hrl_core as core;

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}:{line}: {message}")]
    Trace { path: PathBuf, line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Config(#[from] eat_hrl_core::config::ConfigError),
    #[error("run failed: {0}")]
    Run(#[from] eat_hrl_core::runner::RunError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("bad glob pattern: {0}")]
    Pattern(#[from] glob::PatternError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
