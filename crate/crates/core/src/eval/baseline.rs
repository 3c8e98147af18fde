use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{mae, rmse};
use crate::eval::sweep::{sweep_alpha, AlphaCurve};

/// Full-dataset MAE of the constant-zero steering predictor, in degrees,
/// as published for the two public driving datasets.
pub const REFERENCE_ZERO_PREDICTOR_MAE_DEG: [(&str, f64); 2] = [("comma.ai", 4.1), ("Udacity", 6.9)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub mae: f64,
    pub rmse: f64,
    pub sweep: AlphaCurve,
    /// Context only; not expected at small scale.
    pub reference_mae_deg: Vec<(String, f64)>,
}

/// Metrics of the predictor that always outputs zero steering.
pub fn biased_baseline(steering_targets: &[f64], max_steering: f64, alpha_points: usize) -> Result<BaselineReport> {
    if steering_targets.is_empty() {
        return Err(Error::Empty("baseline needs at least one target"));
    }
    let zeros = vec![0.0; steering_targets.len()];
    Ok(BaselineReport {
        mae: mae(&zeros, steering_targets)?,
        rmse: rmse(&zeros, steering_targets)?,
        sweep: sweep_alpha(&zeros, steering_targets, max_steering, alpha_points)?,
        reference_mae_deg: REFERENCE_ZERO_PREDICTOR_MAE_DEG
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
    })
}
