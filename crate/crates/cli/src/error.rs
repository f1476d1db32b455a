use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failures of a command, each mapped to a documented exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] csma_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed input: {0}")]
    Schema(String),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use csma_core::Error as E;
        match self {
            CliError::Io { .. } => 1,
            CliError::Schema(_) | CliError::Core(E::Parse(_)) => 2,
            CliError::Invalid(_) | CliError::Core(E::InvalidSpec(_) | E::InvalidParams(_) | E::Precondition(_)) => 3,
            CliError::Core(E::CapacityGuard { .. }) => 4,
            CliError::Core(E::Solver(_)) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "io",
            2 => "parse",
            3 => "validation",
            4 => "capacity-guard",
            _ => "solver",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
