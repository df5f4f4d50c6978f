use thiserror::Error;

/// Errors raised by the polymer toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter fell outside the open domain of a Mellin transform.
    #[error("parameter a = {a} is outside the domain ({lo}, {hi})")]
    Domain { a: f64, lo: f64, hi: f64 },

    /// A requested order, size or degree exceeds what is supported.
    #[error("{what} = {got} exceeds the supported maximum {max}")]
    Capability {
        what: &'static str,
        got: usize,
        max: usize,
    },

    /// A point or probability is outside the admissible range.
    #[error("{what} = {value} is outside {range}")]
    Range {
        what: &'static str,
        value: f64,
        range: String,
    },

    /// Model parameters or a path violate a structural constraint.
    #[error("validation failed: {0}")]
    Validation(String),

    /// The requested operation needs state that was not retained.
    #[error("state error: {0}")]
    State(String),

    /// A numerical routine failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// A fit could not be computed from the given data.
    #[error("fit error: {0}")]
    Fit(String),

    /// A run stopped early; `completed` lists the sizes that finished.
    #[error("run stopped after N = {completed:?}: {reason}")]
    Partial {
        completed: Vec<usize>,
        reason: String,
    },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
