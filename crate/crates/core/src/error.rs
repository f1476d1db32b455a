use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("feasible schedule set exceeds the capacity guard of {limit} schedules")]
    CapacityGuard { limit: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("linear program solver failed: {0}")]
    Solver(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
