use codedopt::cluster::ClusterError;
use codedopt::encoding::EncodingError;
use codedopt::numerics::NumericsError;
use codedopt::problem::ProblemError;
use codedopt::solver::SolverError;
use codedopt::straggler::StragglerError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Guarantee(String),
    #[error("{0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Guarantee(_) => 3,
            CliError::Transport(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

impl From<EncodingError> for CliError {
    fn from(e: EncodingError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::SingularSystem(_) => CliError::Guarantee(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<StragglerError> for CliError {
    fn from(e: StragglerError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::Guarantee(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Pool(msg) => CliError::Transport(msg),
            SolverError::BadConfig(_) | SolverError::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            SolverError::Encoding(e) => e.into(),
            SolverError::Problem(e) => e.into(),
            SolverError::Straggler(e) => e.into(),
            other => CliError::Guarantee(other.to_string()),
        }
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::Solver(e) => e.into(),
            ClusterError::Delay(e) => e.into(),
            other => CliError::Transport(other.to_string()),
        }
    }
}
