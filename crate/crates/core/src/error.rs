use thiserror::Error;

use crate::experiments::ExperimentError;
use crate::gee::GeeError;
use crate::panel::PanelError;
use crate::simgen::SimError;
use crate::survival::SurvivalError;
use crate::weights::WeightError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Gee(#[from] GeeError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Process exit status for a failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Config = 2,
    Data = 3,
    Numerical = 4,
}

impl Error {
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            Error::Config(_) | Error::Json(_) => ExitStatus::Config,
            Error::Panel(_) | Error::Io(_) | Error::Csv(_) => ExitStatus::Data,
            Error::Survival(SurvivalError::Panel(_)) | Error::Weights(WeightError::Panel(_)) => {
                ExitStatus::Data
            }
            Error::Gee(GeeError::Panel(_) | GeeError::NonBinaryOutcome(_)) => ExitStatus::Data,
            Error::Weights(WeightError::NonBinaryTreatment { .. }) => ExitStatus::Data,
            Error::Simulation(SimError::InvalidSpec(_)) => ExitStatus::Config,
            Error::Gee(GeeError::InvalidSpec(_)) => ExitStatus::Config,
            Error::Weights(WeightError::Percentile(_)) => ExitStatus::Config,
            Error::Experiment(ExperimentError::Config(_)) => ExitStatus::Config,
            Error::Experiment(ExperimentError::Io(_) | ExperimentError::Csv(_)) => ExitStatus::Data,
            Error::Experiment(_) => ExitStatus::Numerical,
            Error::Survival(_) | Error::Weights(_) | Error::Gee(_) | Error::Simulation(_) => {
                ExitStatus::Numerical
            }
        }
    }
}
