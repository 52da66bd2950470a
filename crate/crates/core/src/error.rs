use thiserror::Error;

/// Errors produced by the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Not enough observations for a test to be meaningful.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Missing or invalid configuration (unknown pair, missing benchmark, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed decimal or record.
    #[error("parse error: {0}")]
    Parse(String),

    /// Design matrix is rank deficient.
    #[error("singular design matrix: column `{column}` is collinear with {others:?}")]
    Singular { column: String, others: Vec<String> },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn insufficient(msg: impl Into<String>) -> Error {
    Error::InsufficientData(msg.into())
}
