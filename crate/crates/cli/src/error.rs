use std::path::Path;

/// Failure of a pipeline command, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration.
    #[error("{0}")]
    Usage(String),
    /// Malformed, missing or insufficient input data.
    #[error("{0}")]
    Data(String),
    /// One or more backends failed to classify some posts.
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> CliError {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    /// An upstream stage output is missing.
    pub(crate) fn missing_upstream(path: &Path, producer: &str) -> CliError {
        CliError::Data(format!(
            "{} not found; run `sentifuse {producer}` first to produce it",
            path.display()
        ))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
