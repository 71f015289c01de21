use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the engine.
#[derive(Error, Debug)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated {what}: expected {expected} bytes, found {found}")]
    Truncated {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("degenerate ground truth: {0}")]
    DegenerateGroundTruth(String),

    #[error("rank deficient: requested {requested} components but data has rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("zero variance data")]
    ZeroVariance,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("negative component {value} at index {index}: chi-square requires non-negative feature vectors")]
    NegativeComponent { index: usize, value: f64 },

    #[error("{0}")]
    MissingModel(String),

    #[error("model fingerprint mismatch: {0}")]
    FingerprintMismatch(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

/// Process exit classification used by the command-line front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    User,
    Data,
    Internal,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::User => 1,
            ErrorClass::Data => 2,
            ErrorClass::Internal => 3,
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_)
            | Error::MissingModel(_)
            | Error::FingerprintMismatch(_)
            | Error::Json(_) => ErrorClass::User,
            Error::Internal(_) => ErrorClass::Internal,
            _ => ErrorClass::Data,
        }
    }
}
