//! Process-level error wrapper: every failure maps to an exit code —
//! 1 for bad inputs, 2 for internal/numerical failures.

use std::fmt;

use lfrecon_core::error::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    Core(CoreError),
    /// A failure that is not the caller's fault (incomplete generation,
    /// thread-pool setup, ...): always exit code 2.
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Internal(m) => write!(f, "{m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_input_error() => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
