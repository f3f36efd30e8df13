//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A chart account references an ancestor that does not exist.
    #[error("account {code}: missing ancestor {missing}")]
    MissingAncestor { code: String, missing: String },

    /// Expression text could not be parsed. Column is 1-based.
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },

    /// A code token does not exist in the standard chart.
    #[error("unknown account code {0}")]
    UnknownCode(u32),

    /// Caller violated an operation contract (shapes, period ordering, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A company lacks the history required for a 12-month window.
    #[error("company {company} excluded: {reason}")]
    InsufficientHistory { company: String, reason: String },

    /// Malformed or structurally invalid data file.
    #[error("data error in {path}: {message}")]
    Data { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn data(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: msg.into(),
        }
    }
}
