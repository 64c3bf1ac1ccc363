use std::path::PathBuf;

use thiserror::Error;

use crate::config::Route;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("route `{route}` is not supported for {input} input")]
    UnsupportedRouteForInput { route: Route, input: String },

    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("truncation: {0}")]
    Truncation(String),

    #[error(transparent)]
    Numerical(#[from] qdiffusion::Error),

    #[error("non-finite metric: {0}")]
    NonFinite(String),

    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        use qdiffusion::Error as E;
        match self {
            CliError::Schema { .. } | CliError::UnsupportedRouteForInput { .. } | CliError::ConfigRead { .. } => {
                exit::SCHEMA
            }
            CliError::Truncation(_) => exit::TRUNCATION,
            CliError::Numerical(E::TruncationLoss { .. } | E::NumberExceedsCutoff { .. } | E::CutoffTooSmall { .. }) => {
                exit::TRUNCATION
            }
            CliError::Numerical(_) | CliError::NonFinite(_) | CliError::ThreadPool(_) | CliError::Output { .. } => {
                exit::NUMERICAL
            }
        }
    }
}

/// Exit statuses of the `qdiffusion` binary.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const SCHEMA: i32 = 2;
    pub const TOLERANCE: i32 = 3;
    pub const TRUNCATION: i32 = 4;
    pub const NUMERICAL: i32 = 5;
}
