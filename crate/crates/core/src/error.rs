use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// Malformed binary raster. `offset` is the byte position where decoding stopped.
    #[error("{what} at byte offset {offset}")]
    Format { what: String, offset: usize },

    /// Malformed line in one of the whitespace-separated text formats.
    #[error("line {line}: {what}")]
    Parse { line: usize, what: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, offset: usize) -> Self {
        Error::Format {
            what: what.into(),
            offset,
        }
    }

    pub(crate) fn parse(line: usize, what: impl Into<String>) -> Self {
        Error::Parse {
            line,
            what: what.into(),
        }
    }

    pub(crate) fn invalid(what: impl Into<String>) -> Self {
        Error::InvalidInput(what.into())
    }

    /// True when the failure came from configuration rather than input data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
