use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{mae_at_alpha, AlphaMae};

pub const SWEEP_HEADER: &str = "alpha,mae,population";
pub const DEFAULT_ALPHA_POINTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCurve {
    pub points: Vec<AlphaMae>,
}

impl AlphaCurve {
    /// Multiplies alphas and errors by `factor` (e.g. radians to degrees).
    pub fn scaled(&self, factor: f64) -> AlphaCurve {
        AlphaCurve {
            points: self
                .points
                .iter()
                .map(|p| AlphaMae {
                    alpha: p.alpha * factor,
                    mae: p.mae.map(|m| m * factor),
                    population: p.population,
                })
                .collect(),
        }
    }

    /// Undefined points are written as `nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for p in &self.points {
            let mae = p.mae.map_or_else(|| "nan".to_string(), |m| m.to_string());
            out.push_str(&format!("{},{},{}\n", p.alpha, mae, p.population));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// MAE@α on `num_points` evenly spaced alphas from 0 to `max_steering`.
pub fn sweep_alpha(pred: &[f64], target: &[f64], max_steering: f64, num_points: usize) -> Result<AlphaCurve> {
    if num_points < 2 {
        return Err(Error::InvalidInput(format!("an alpha sweep needs at least 2 points, got {num_points}")));
    }
    if !(max_steering > 0.0) {
        return Err(Error::InvalidInput(format!("max steering must be positive, got {max_steering}")));
    }
    let last = (num_points - 1) as f64;
    let points = (0..num_points)
        .map(|i| mae_at_alpha(pred, target, max_steering * i as f64 / last))
        .collect::<Result<_>>()?;
    Ok(AlphaCurve { points })
}
