use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite {component} at iteration {iteration}")]
    NonFinite { component: String, iteration: u64 },

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("data error: {0}")]
    Data(#[from] DataError),

    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,

    #[error("row {row}: expected {expected} columns, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },

    #[error("row {row}, column {col}: cannot parse `{value}` as a number")]
    NonNumeric { row: usize, col: usize, value: String },

    #[error("row {row}: label {value} is not a binary class (use 0/1 or -1/+1)")]
    BadLabel { row: usize, value: String },

    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),

    #[error("csv: {0}")]
    Csv(String),
}

/// Checkpoint failures, each with a stable numeric code.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint truncated")]
    Truncated,

    #[error("malformed checkpoint: {0}")]
    Malformed(String),

    #[error("parameter `{0}` missing from checkpoint")]
    MissingBlock(String),

    #[error("parameter `{name}` has shape {found:?}, model expects {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
}

impl CheckpointError {
    pub fn code(&self) -> u8 {
        match self {
            CheckpointError::BadMagic => 1,
            CheckpointError::Version { .. } => 2,
            CheckpointError::Truncated => 3,
            CheckpointError::Malformed(_) => 4,
            CheckpointError::MissingBlock(_) => 5,
            CheckpointError::ShapeMismatch { .. } => 6,
        }
    }
}
