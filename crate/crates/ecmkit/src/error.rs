//! Error types shared across the crate.

use std::fmt;
use std::io;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by model construction, ingestion, and the numerical layers.
#[derive(Debug)]
pub enum Error {
    /// Invalid static configuration (cell constants, tables, polynomial coefficients).
    Config(String),
    /// Invalid argument to an operation (bad step size, empty profile, ...).
    Argument(String),
    /// Tabular input could not be parsed; `line` is 1-based within the stream.
    Parse { line: usize, message: String },
    /// Non-finite values or numerical breakdown during evaluation.
    Numeric(String),
    /// Least-squares fitting failed (rank deficiency, bad initial point, ...).
    Fit(String),
    /// Linear-system assembly or solve failed.
    Solver(String),
    /// Underlying I/O failure.
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Fit(msg) => write!(f, "fit error: {msg}"),
            Error::Solver(msg) => write!(f, "solver error: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Argument(_) | Error::Parse { .. } | Error::Io(_)
        )
    }
}
