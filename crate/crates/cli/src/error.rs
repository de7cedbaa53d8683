//! CLI failure type carrying the documented exit codes: 2 for input and
//! configuration problems, 3 for checks that ran to completion and failed.

use thiserror::Error;

/// Exit code for unreadable, malformed, or inconsistent inputs.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for a failed check (e.g. a gradient sweep over tolerance).
pub const EXIT_CHECK: i32 = 3;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// The inputs or settings were unusable; nothing was checked.
    #[error("{0}")]
    Input(String),

    /// The requested work ran and its verdict is negative.
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Check(_) => EXIT_CHECK,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Check(_) => "check",
        }
    }

    /// One-line JSON for stderr, so callers can parse failures.
    pub fn structured(&self) -> String {
        serde_json::json!({
            "error": self.to_string(),
            "kind": self.kind(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl From<pedseg_core::Error> for CliError {
    fn from(err: pedseg_core::Error) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<pedseg_nn::Error> for CliError {
    fn from(err: pedseg_nn::Error) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<pedseg_train::Error> for CliError {
    fn from(err: pedseg_train::Error) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<pedseg_augment::Error> for CliError {
    fn from(err: pedseg_augment::Error) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Input(format!("json: {err}"))
    }
}
