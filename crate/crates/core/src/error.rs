use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at index {index}: {context}")]
    NonFinite { index: usize, context: String },

    #[error("empty series")]
    EmptySeries,

    #[error("segment too short: {0}")]
    SegmentTooShort(String),

    #[error("matrix not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("hankel matrix has numerical rank {rank} < {requested}; try a smaller state order")]
    RankDeficient { rank: usize, requested: usize },

    #[error("unstable model: {0}")]
    Unstable(String),

    #[error("simulation blew up at time index {index}")]
    SimulationBlowUp { index: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("csv error in {path} at row {row}: {message}")]
    Csv { path: PathBuf, row: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checksum mismatch for {path}: expected {expected}, found {found} (file quarantined)")]
    Checksum { path: PathBuf, expected: String, found: String },

    #[error("download failed after {attempts} attempts: {message}")]
    Download { attempts: usize, message: String },

    #[error("network access refused in offline mode: {0}")]
    Offline(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
