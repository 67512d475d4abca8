use std::fmt;
use std::path::Path;

use ethsim_core::EthError;
use thiserror::Error;

/// A validation problem addressed by its path in the scenario document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl Issue {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario is invalid:\n{}", list(.0))]
    Validation(Vec<Issue>),

    /// Raised while building a scenario: usually bad input.
    #[error(transparent)]
    Core(#[from] EthError),

    /// Raised while running: a broken invariant of the dynamics.
    #[error("numerical failure during the run: {0}")]
    Numerical(EthError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("output encoding failed: {0}")]
    Encode(String),

    #[error("check `{check}` failed: {detail}")]
    CheckFailed { check: &'static str, detail: String },
}

fn list(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for bad input, 3 for a broken numerical invariant, 4 for a
    /// resource cap, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Core(e) => match e {
                EthError::CapExceeded { .. } => 4,
                EthError::DimensionMismatch(_)
                | EthError::InvalidParameter(_)
                | EthError::IndexOutOfRange { .. }
                | EthError::HorizonExceeded { .. }
                | EthError::NonFinite { .. }
                | EthError::NotUnitary { .. }
                | EthError::NotHermitian { .. }
                | EthError::NotDensity(_)
                | EthError::NotProjection { .. } => 2,
                EthError::EigenNonConvergence { .. } | EthError::InvariantViolation { .. } => 3,
            },
            HarnessError::Numerical(_) | HarnessError::CheckFailed { .. } => 3,
            HarnessError::Io { .. } | HarnessError::Encode(_) => 1,
        }
    }
}

/// Tags an error raised during a run; resource caps keep their own code.
pub fn during_run(e: EthError) -> HarnessError {
    match e {
        EthError::CapExceeded { .. } => HarnessError::Core(e),
        other => HarnessError::Numerical(other),
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Encode(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Encode(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
