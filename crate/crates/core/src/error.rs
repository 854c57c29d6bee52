use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, schedule or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// An input violates the admissible set of a model (positivity, finiteness).
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical parameter (width, step, exponent) is out of range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// The grid is too fine for the requested operator to be representable.
    #[error("resolution error: {0}")]
    Resolution(String),
    /// A persisted file or config document is malformed.
    #[error("format error: {0}")]
    Format(String),
    /// Data loaded successfully but does not match what the run expects.
    #[error("validation error: {0}")]
    Validation(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
