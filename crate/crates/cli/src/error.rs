use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error at '{key}': {message}")]
    Validation { key: String, message: String },

    #[error("scenario '{scenario}': {source}")]
    Runtime {
        scenario: String,
        #[source]
        source: trajcomplete::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit status: 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } | CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Runtime { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
