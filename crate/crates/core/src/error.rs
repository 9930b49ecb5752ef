use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the analysis pipeline.
///
/// The variants split into two families that callers map to different exit
/// codes: I/O failures, and everything that means "the inputs or arguments
/// violate a contract".
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("{context}: {message}")]
    Format { context: String, message: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular design: column `{column}` is linearly dependent on {depends_on:?}")]
    SingularDesign {
        column: String,
        depends_on: Vec<String>,
    },

    #[error("classifier backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("classifier protocol error: {0}")]
    Protocol(String),
}

impl Error {
    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    pub(crate) fn degenerate(message: impl Into<String>) -> Self {
        Error::Degenerate(message.into())
    }

    /// True for failures of the environment rather than of the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::BackendUnavailable(_))
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        if err.is_io_error() {
            match err.into_kind() {
                csv::ErrorKind::Io(e) => Error::Io(e),
                _ => unreachable!(),
            }
        } else {
            Error::format("csv", err.to_string())
        }
    }
}
