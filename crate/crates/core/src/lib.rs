//! Multi-horizon forecasting of vehicle speed and steering angle from a
//! front-camera clip and a short CAN-bus history.
//!
//! Modules:
//! - [`types`]: domain types and their invariants
//! - [`data`]: CSV ingestion, resampling, windowing, augmentation, splits,
//!   synthetic recordings and histograms
//! - [`models`]: encoders, fusion modules, checkpoints
//! - [`training`]: squared-error objective and the training loop
//! - [`eval`]: MAE/RMSE, MAE@α sweeps, baselines and the vision ablation

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod tensor;
pub mod training;
pub mod types;

pub use error::{Error, Result};
