use std::io;
use std::path::PathBuf;

use psp_core::PspError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] PspError),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },

    #[error("invalid config {path}: {source}")]
    ConfigJson { path: PathBuf, source: serde_json::Error },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 1 for bad inputs or configuration, 2 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_runtime() => 2,
            CliError::Write { .. } => 2,
            _ => 1,
        }
    }
}
