use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is numerically zero")]
    ZeroMatrix,

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("data length {got} does not match {rows}x{cols}")]
    InvalidData { rows: usize, cols: usize, got: usize },

    #[error("invalid rank {rank} for a {d1}x{d2} problem")]
    InvalidRank { rank: usize, d1: usize, d2: usize },

    #[error("invalid dimension: {0}")]
    InvalidDim(String),

    #[error("scaling grid too small: {0}")]
    InsufficientGrid(String),

    #[error("step {step} outside schedule of {total} steps")]
    OutOfRange { step: u64, total: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub type Result<T> = std::result::Result<T, Error>;
