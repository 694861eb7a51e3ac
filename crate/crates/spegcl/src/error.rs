//! Error types shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit-code scheme: `Argument` and
/// `InsufficientData` are configuration errors (exit 1), `Ingest`,
/// `Format` and `Stratification` are data errors (exit 2), and
/// `Numeric` is a numeric failure (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    /// An argument or configuration value violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A required input file is missing or unreadable.
    #[error("ingest error: {0}")]
    Ingest(String),

    /// Malformed content inside an input file.
    #[error("format error in {file} line {line}: {msg}")]
    Format {
        file: String,
        line: usize,
        msg: String,
    },

    /// An operation was called on a value in the wrong state.
    #[error("state error: {0}")]
    State(String),

    /// Non-finite values or a numerically invalid result.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A class has too few samples for the requested stratified split.
    #[error("stratification error: {0}")]
    Stratification(String),

    /// Too few usable points for a statistical fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
