//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two operands (or an operand and a parameter block) disagree on dimensions.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// An input that must be non-degenerate (e.g. nonzero norm) was degenerate.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A class or element index fell outside its valid range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// An operation received an empty input it cannot handle.
    #[error("empty input: {0}")]
    Empty(String),

    /// A configuration value violates its documented constraints.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A text file failed to parse; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A checkpoint file is malformed or structurally inconsistent.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// A dataset failed cross-validation between stores and manifest.
    #[error("dataset validation: {0}")]
    Validation(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
