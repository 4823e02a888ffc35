// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;

use sparsedict_core::Error as CoreError;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or incompatible inputs (exit 2).
    Validation(String),
    /// Numeric or training failure (exit 3).
    Runtime(String),
    /// Unreadable, unwritable or malformed files (exit 4).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Io { .. } | CoreError::Format { .. } => CliError::Io(msg),
            CoreError::NonFinite { .. } => CliError::Runtime(msg),
            CoreError::InvalidArgument(_)
            | CoreError::Invariant(_)
            | CoreError::DimensionMismatch { .. }
            | CoreError::IndexOutOfRange { .. } => CliError::Validation(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
