use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected \"CELOSSv1\"")]
    BadMagic { path: PathBuf, found: String },

    #[error("{path}: truncated dump, header declares {expected} values but payload holds {actual} bytes")]
    Truncated { path: PathBuf, expected: u64, actual: u64 },

    #[error("{path}: header declares {header} values but payload holds {actual}")]
    CountMismatch { path: PathBuf, header: u64, actual: u64 },

    #[error("{path}: line {line}: cannot parse {text:?} as a loss value")]
    Parse { path: PathBuf, line: usize, text: String },

    #[error("loss vector is empty")]
    EmptyLosses,

    #[error("invalid loss {value} at index {index}: losses must be >= 0 or +inf")]
    InvalidLoss { index: usize, value: f64 },

    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("duplicate checkpoint id {0:?}")]
    DuplicateId(String),

    #[error("checkpoint {checkpoint:?} has no summary {summary:?}")]
    MissingSummary { checkpoint: String, summary: String },

    #[error("unknown family {0:?}")]
    UnknownFamily(String),

    #[error("group {0:?} is empty")]
    EmptyGroup(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite update at step {step}, row {row}")]
    Divergence { step: usize, row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
