use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("input of length {len} exceeds slot capacity {capacity}")]
    TooManyValues { len: usize, capacity: usize },

    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },

    #[error("scale mismatch: {left} vs {right}")]
    ScaleMismatch { left: f64, right: f64 },

    #[error("level exhausted: operation needs {needed} level(s), ciphertext has {available}")]
    LevelExhausted { needed: usize, available: usize },

    #[error("cannot raise level from {current} to {target}")]
    LevelRaise { current: usize, target: usize },

    #[error("rotation step {step} is out of range for {slots} slots")]
    RotationOutOfRange { step: usize, slots: usize },

    #[error("missing rotation key for step {0}")]
    MissingRotationKey(usize),

    #[error("secret key required for this operation")]
    MissingSecretKey,

    #[error("key material does not match the parameter set")]
    KeyMismatch,

    #[error("operand belongs to a different backend ({found}, expected {expected})")]
    BackendMismatch { expected: &'static str, found: &'static str },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("malformed encoding: {0}")]
    Malformed(String),

    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
