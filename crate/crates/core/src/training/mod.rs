//! Optimization of the multi-horizon squared-error objective.

pub mod config;
pub mod log;
pub mod loss;
pub mod optimizer;
pub mod trainer;

pub use config::TrainConfig;
pub use log::{StepRecord, TrainLog};
pub use loss::{forecast_loss, loss, loss_and_grad};
pub use optimizer::{Optimizer, OptimizerKind};
pub use trainer::{train, train_single_horizon};

pub use crate::models::ModelParameters;

/// Forward pass in physical units; see [`ModelParameters::predict`].
pub fn predict(params: &ModelParameters, sample: &crate::types::Sample) -> crate::Result<crate::types::ForecastOutput> {
    params.predict(sample)
}
