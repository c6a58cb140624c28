use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the clustering library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data or a matrix violates a structural contract.
    #[error("validation error: {0}")]
    Validation(String),

    /// A tuning parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Shapes of the inputs do not agree.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Input is geometrically degenerate (rank deficient, all identical, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical routine failed (eigen-solver, non-finite energies, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
