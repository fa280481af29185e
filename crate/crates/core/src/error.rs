use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A mathematical precondition does not hold (e.g. object inside the focal length).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    /// Invalid or inconsistent configuration values.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Caller supplied input that violates an operation contract.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("pose estimation failed: {0}")]
    Estimation(String),

    #[error("no detected records to aggregate")]
    EmptyReport,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 1 validation, 2 IO, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Domain(_)
            | Error::Config(_)
            | Error::Input(_)
            | Error::EmptyReport
            | Error::Parse { .. } => 1,
            Error::Convergence(_) | Error::Estimation(_) => 3,
        }
    }
}
