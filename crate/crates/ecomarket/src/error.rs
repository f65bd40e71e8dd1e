use std::path::PathBuf;

use ecomarket_core::env::EnvError;
use ecomarket_core::ot::OtError;
use ecomarket_core::policy::PpoError;
use ecomarket_core::stylized::MetricError;
use ecomarket_core::train::TrainError;
use thiserror::Error;

use crate::config::ConfigError;
use crate::formats::FormatError;

/// Process exit status for each class of failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Data = 2,
    Numerical = 3,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: FormatError },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error("{0}")]
    Usage(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl Error {
    pub fn file(path: impl Into<PathBuf>, source: impl Into<FormatError>) -> Self {
        Error::File { path: path.into(), source: source.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Error::Config(_) | Error::Usage(_) => ExitCode::Usage,
            Error::File { .. } | Error::Pool(_) => ExitCode::Data,
            Error::Env(EnvError::Book(_)) => ExitCode::Numerical,
            Error::Env(_) => ExitCode::Usage,
            Error::Train(TrainError::Env(EnvError::Book(_))) => ExitCode::Numerical,
            Error::Train(TrainError::Ppo(PpoError::Config { .. })) => ExitCode::Usage,
            Error::Train(TrainError::Ppo(_)) => ExitCode::Numerical,
            Error::Train(_) => ExitCode::Usage,
            Error::Metric(MetricError::Degenerate) => ExitCode::Numerical,
            Error::Metric(_) => ExitCode::Data,
            Error::Ot(OtError::NonFinite | OtError::Degenerate(_)) => ExitCode::Numerical,
            Error::Ot(_) => ExitCode::Data,
        }
    }
}
