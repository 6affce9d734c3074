use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants are grouped by what went wrong so the CLI can map them to exit
/// codes: bad data on disk or in memory is an input problem, bad knobs are
/// a configuration problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupted file: {0}")]
    Corruption(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("report serialization failed: {0}")]
    Report(String),
}

impl Error {
    /// Process exit code for this error: 2 for input/format problems,
    /// 3 for configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::InvalidState(_) => 3,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Report(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Report(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
