use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DdrsError>;

#[derive(Debug, Error)]
pub enum DdrsError {
    #[error("InvalidParam({field}): {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("DimensionMismatch: {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("EmptyScores: cannot select a winner from an empty score vector")]
    EmptyScores,

    #[error("DegenerateInput: {0}")]
    DegenerateInput(String),

    #[error("LengthMismatch: {what}: {left} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("NonFinite: value at row {row}, column {column} is not finite")]
    NonFinite { row: usize, column: usize },

    #[error("OutOfRange: value {value} at index {index} is outside [0, 255]")]
    OutOfRange { index: usize, value: f64 },

    #[error("BadMagic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    #[error("TruncatedFile: {0}")]
    TruncatedFile(String),

    #[error("ParseError at row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("RaggedRows: row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("VersionMismatch: file version {found}, supported version {supported}")]
    VersionMismatch { found: u8, supported: u8 },

    #[error("Corrupt: {0}")]
    Corrupt(String),

    #[error("NoConvergence: {0}")]
    NoConvergence(String),

    #[error("IoError: {0}")]
    Io(#[from] io::Error),
}

impl DdrsError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        DdrsError::InvalidParam {
            field,
            reason: reason.into(),
        }
    }

    pub fn dims(what: &'static str, expected: usize, found: usize) -> Self {
        DdrsError::DimensionMismatch {
            what,
            expected,
            found,
        }
    }

    /// True for errors caused by the caller's input (bad parameters, files or
    /// shapes) rather than by a failure inside the library.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, DdrsError::NoConvergence(_))
    }
}
