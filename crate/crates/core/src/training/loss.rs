use crate::error::{Error, Result};
use crate::types::{ForecastOutput, HorizonTargets};

fn check(pred: &[[f64; 2]], target: &[[f64; 2]], weights: [f64; 2]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has {} rows, target has {}",
            pred.len(),
            target.len()
        )));
    }
    let finite = |rows: &[[f64; 2]]| rows.iter().all(|r| r[0].is_finite() && r[1].is_finite());
    if !finite(pred) || !finite(target) || !weights.iter().all(|w| w.is_finite()) {
        return Err(Error::InvalidInput("loss inputs must be finite".into()));
    }
    Ok(())
}

/// `Σ_rows Σ_s w_s (ŷ − y)²`.
pub fn loss(pred: &[[f64; 2]], target: &[[f64; 2]], weights: [f64; 2]) -> Result<f64> {
    check(pred, target, weights)?;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| weights[0] * (p[0] - t[0]).powi(2) + weights[1] * (p[1] - t[1]).powi(2))
        .sum())
}

/// Loss together with its gradient with respect to `pred`.
pub fn loss_and_grad(pred: &[[f64; 2]], target: &[[f64; 2]], weights: [f64; 2]) -> Result<(f64, Vec<[f64; 2]>)> {
    let value = loss(pred, target, weights)?;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| [2.0 * weights[0] * (p[0] - t[0]), 2.0 * weights[1] * (p[1] - t[1])])
        .collect();
    Ok((value, grad))
}

pub fn forecast_loss(pred: &ForecastOutput, target: &HorizonTargets, weights: [f64; 2]) -> Result<f64> {
    loss(&pred.values, &target.values, weights)
}
