use std::fmt;

use thiserror::Error;

use crate::tracker::{BackendError, PromptPoint};

/// Position inside a text or binary payload where parsing failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Byte(n) => write!(f, "byte {n}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error at {location}: {message}")]
    Format { location: Location, message: String },

    #[error("registration error: {0}")]
    Registration(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("template mismatch at {frame}: {message}")]
    Template { frame: String, message: String },

    #[error("load error at frame {frame}: {message}")]
    Load { frame: usize, message: String },

    #[error("no mask for frame {0}")]
    Gap(usize),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("initialization error: {0}")]
    Initialization(String),

    #[error("prompt placement error at frame {} (row {}, col {}): {reason}", .point.frame_index, .point.row, .point.col)]
    PromptPlacement { point: PromptPoint, reason: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("backend failure at frame {frame}: {source}")]
    Backend {
        frame: usize,
        #[source]
        source: BackendError,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn format(location: Location, message: impl Into<String>) -> Self {
        Error::Format {
            location,
            message: message.into(),
        }
    }

    pub(crate) fn json(err: serde_json::Error) -> Self {
        Error::format(Location::Line(err.line()), err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
