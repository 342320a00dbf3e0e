use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The safe action set is empty or a safeguard could not certify its output.
    /// Training must stop: the configured safe set is unusable.
    #[error("safety fault: {0}")]
    SafetyFault(String),
    #[error("solver fault: {0}")]
    Solver(String),
    #[error("simulation fault: {0}")]
    Simulation(String),
    #[error("ray origin coincides with the action")]
    DegenerateRay,
    /// A tape variable was used after the tape was cleared.
    #[error("tape variable used after the graph was cut")]
    StaleVariable,
    #[error("enumeration too large: dimension {dim}, {generators} generators")]
    TooLarge { dim: usize, generators: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
