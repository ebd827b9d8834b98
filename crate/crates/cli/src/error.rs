use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input data.
    #[error("{0}")]
    Input(String),

    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: oscar_core::Error,
    },

    #[error(transparent)]
    Core(#[from] oscar_core::Error),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Data { .. } | CliError::Core(_) => EXIT_INPUT,
            CliError::Write { .. } | CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Write {
            path: path.into(),
            source,
        }
    }
}
