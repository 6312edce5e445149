//! Training, the E_deg metric, the nine-configuration sweep and the
//! quadrant-classifier baseline.

mod baseline;
mod config;
mod metric;
mod sweep;
mod train;

pub use baseline::{quadrant_baseline, BaselineInaccuracy, QuadrantBaseline};
pub use config::RunConfig;
pub use metric::{e_deg, EvalReport};
pub use sweep::{sweep, SweepResult, SweepRun, SweepSummary};
pub use train::{evaluate, predict_dataset, train, EpochStats, RunReport, TrainedRun};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {targets} targets")]
    Length { predictions: usize, targets: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}
