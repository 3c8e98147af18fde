//! Error metrics, the per-range MAE@α protocol, and comparison harnesses.

pub mod ablation;
pub mod baseline;
pub mod metrics;
pub mod plot;
pub mod report;
pub mod sweep;

pub use ablation::{ablate_vision, AblationReport};
pub use baseline::{biased_baseline, BaselineReport};
pub use metrics::{mae, mae_at_alpha, rmse, AlphaMae};
pub use report::{evaluate_model, AngleUnit, EvalReport, PredictionSet, ReportMetadata};
pub use sweep::{sweep_alpha, AlphaCurve};
