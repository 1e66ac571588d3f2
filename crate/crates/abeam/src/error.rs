//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("zero-energy input: {0}")]
    ZeroEnergy(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("model checkpoint error: {0}")]
    Checkpoint(String),

    #[error("ground truth unavailable: {0}")]
    NoGroundTruth(String),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
