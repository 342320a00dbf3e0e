use std::path::PathBuf;

use safeshield_core::Error as CoreError;

/// Errors raised by the harness.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

impl BenchError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        BenchError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 2 for configuration and input problems, 3 for safety faults,
    /// 4 for solver and simulation faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Io { .. } | BenchError::Format { .. } => 2,
            BenchError::Core(e) => core_exit_code(e),
        }
    }
}

pub fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::SafetyFault(_) => 3,
        CoreError::InvalidInput(_) | CoreError::Dimension { .. } => 2,
        CoreError::Solver(_)
        | CoreError::Simulation(_)
        | CoreError::DegenerateRay
        | CoreError::StaleVariable
        | CoreError::TooLarge { .. } => 4,
    }
}
