use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, JuiceError>;

#[derive(Debug, Error)]
pub enum JuiceError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{0} is not Hermitian positive-definite")]
    NotPositiveDefinite(&'static str),

    #[error("solver fault at outer iteration {iteration}: {reason}")]
    SolverFault { iteration: usize, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl JuiceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        JuiceError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        JuiceError::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
