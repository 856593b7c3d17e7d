use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Some items of a batch failed; the rest were written. Exit code 1.
    #[error("{failed} of {total} items failed")]
    Partial { failed: usize, total: usize },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    File { path: PathBuf, source: bwsv::Error },

    #[error(transparent)]
    Core(#[from] bwsv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub(crate) fn file(path: impl Into<PathBuf>) -> impl FnOnce(bwsv::Error) -> CliError {
        let path = path.into();
        move |source| CliError::File { path, source }
    }
}
