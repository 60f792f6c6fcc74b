use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parameter out of range: {0}")]
    InvalidParameter(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("agent and obstacle spawn positions overlap (separation {separation:.3} m < {min_separation:.3} m)")]
    OverlappingSpawn { separation: f64, min_separation: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("dataset file error: {0}")]
    DatasetFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
