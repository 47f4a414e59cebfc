use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// Row shape problems (ragged rows, missing header).
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },

    /// A cell could not be interpreted. `line` and `column` are 1-based.
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("no usable perturbation experiments in dataset")]
    EmptyDataset,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("insufficient data: {have} paired observations, need at least {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
