use std::path::PathBuf;

use thiserror::Error;

use crate::providers::ProviderError;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data, corrupt index, invalid parameters.
    Data,
    /// Model endpoint failure (transport, rejection, empty output).
    Provider,
    /// Numerical breakdown or a broken internal invariant.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("{stage}: {path}:{line}: {message}")]
    Malformed {
        stage: &'static str,
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate passage id `{0}`")]
    DuplicateId(String),

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("index corruption in `{file}`: {message}")]
    Corrupt { file: String, message: String },

    #[error("checksum mismatch for `{file}` (expected {expected}, found {found})")]
    Checksum {
        file: String,
        expected: String,
        found: String,
    },

    #[error("index format version {found} is not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("non-finite score at PPR iteration {iteration}")]
    Numerical { iteration: usize },

    #[error("no seed entity resolved in the index; dense fallback required")]
    NoSeeds,

    #[error("no evidence passages available for the answer prompt")]
    NoEvidence,

    #[error("{context}: {path}: {source}")]
    Io {
        context: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Provider(p) => p.class(),
            Error::Numerical { .. } => ErrorClass::Internal,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(context: &'static str, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context,
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(file: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Corrupt {
            file: file.into(),
            message: message.into(),
        }
    }
}
