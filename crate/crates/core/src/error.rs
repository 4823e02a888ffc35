// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by numeric operations, models, encoders and loaders.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("{op}: dimension mismatch, left {left:?} vs right {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: index {index} out of range (len {len})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },

    /// A function or loss evaluated to NaN or infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A precondition on arguments or configuration is violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// One or more model invariants are violated.
    #[error("invariant violation: {}", .0.join("; "))]
    Invariant(Vec<String>),

    /// Binary or text file does not follow its format.
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by reading or writing files (including
    /// malformed file contents).
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}
