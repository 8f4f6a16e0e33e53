use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error class, used by the command-line front-end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("position {what} {pos:?} lies outside the room {dims:?}")]
    OutsideRoom {
        what: &'static str,
        pos: [f64; 3],
        dims: [f64; 3],
    },
    #[error("signal is silent: {0}")]
    Silent(&'static str),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("split contamination: {0}")]
    Contamination(String),
    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("wav error on {path:?}: {source}")]
    Wav {
        path: PathBuf,
        source: hound::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::Contamination(_) => {
                ErrorKind::Config
            }
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::Data(_)
            | Error::OutsideRoom { .. }
            | Error::Silent(_)
            | Error::Mismatch(_)
            | Error::Io { .. }
            | Error::Wav { .. }
            | Error::Json(_) => ErrorKind::Data,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
