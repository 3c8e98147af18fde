//! Prediction sets and evaluation reports.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{mae, rmse};
use crate::eval::sweep::{sweep_alpha, AlphaCurve};
use crate::models::ModelParameters;
use crate::types::{Sample, SIGNALS, SPEED, STEERING};

pub const REPORT_HEADER: &str = "signal,horizon_index,metric,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngleUnit {
    Rad,
    Deg,
}

impl AngleUnit {
    pub fn factor(&self) -> f64 {
        match self {
            AngleUnit::Rad => 1.0,
            AngleUnit::Deg => 180.0 / std::f64::consts::PI,
        }
    }
}

impl fmt::Display for AngleUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AngleUnit::Rad => "rad",
            AngleUnit::Deg => "deg",
        })
    }
}

impl FromStr for AngleUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rad" => Ok(AngleUnit::Rad),
            "deg" => Ok(AngleUnit::Deg),
            other => Err(Error::Config(format!("unknown unit `{other}` (expected rad or deg)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub sample_id: usize,
    pub horizon_index: usize,
    pub signal: usize,
    pub predicted: f64,
    pub target: f64,
}

/// Predictions paired with targets, in physical units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub rows: Vec<PredictionRow>,
}

impl PredictionSet {
    /// Runs `params.predict` over every sample.
    pub fn from_model(params: &ModelParameters, samples: &[Sample]) -> Result<Self> {
        let mut set = PredictionSet::default();
        for (i, s) in samples.iter().enumerate() {
            let out = params.predict(s)?;
            set.push_sample(i, &out.values, &s.targets.values);
        }
        Ok(set)
    }

    /// The constant-zero predictor on every signal.
    pub fn zero(samples: &[Sample]) -> Self {
        let mut set = PredictionSet::default();
        for (i, s) in samples.iter().enumerate() {
            let zeros = vec![[0.0; 2]; s.targets.values.len()];
            set.push_sample(i, &zeros, &s.targets.values);
        }
        set
    }

    pub fn push_sample(&mut self, sample_id: usize, pred: &[[f64; 2]], target: &[[f64; 2]]) {
        for (h, (p, t)) in pred.iter().zip(target).enumerate() {
            for signal in [SPEED, STEERING] {
                self.rows.push(PredictionRow {
                    sample_id,
                    horizon_index: h,
                    signal,
                    predicted: p[signal],
                    target: t[signal],
                });
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !seen.insert((r.sample_id, r.horizon_index, r.signal)) {
                return Err(Error::InvalidInput(format!(
                    "duplicate prediction for sample {} horizon {} signal {}",
                    r.sample_id, r.horizon_index, r.signal
                )));
            }
            if !(r.predicted.is_finite() && r.target.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite prediction row {r:?}")));
            }
        }
        Ok(())
    }

    /// `(predicted, target)` columns for one signal, optionally one horizon.
    pub fn columns(&self, signal: usize, horizon: Option<usize>) -> (Vec<f64>, Vec<f64>) {
        self.rows
            .iter()
            .filter(|r| r.signal == signal && horizon.is_none_or(|h| r.horizon_index == h))
            .map(|r| (r.predicted, r.target))
            .unzip()
    }

    pub fn horizons(&self) -> usize {
        self.rows.iter().map(|r| r.horizon_index + 1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub signal: String,
    /// `None` for the pooled-over-horizons row.
    pub horizon: Option<usize>,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset: String,
    pub model_fingerprint: String,
    pub max_steering_rad: f64,
    pub steering_unit: AngleUnit,
    pub samples: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub metrics: Vec<MetricRow>,
    /// Steering MAE@α pooled over horizons, in `steering_unit`.
    pub sweep: AlphaCurve,
}

impl EvalReport {
    /// MAE/RMSE per signal and horizon plus pooled rows, and the steering
    /// α-sweep. Steering values are converted to `unit`; speed stays in m/s.
    pub fn from_predictions(set: &PredictionSet, metadata: ReportMetadata, alpha_points: usize) -> Result<Self> {
        set.validate()?;
        if set.rows.is_empty() {
            return Err(Error::Empty("cannot report on an empty prediction set"));
        }
        let factor = metadata.steering_unit.factor();
        let mut metrics = Vec::new();
        for signal in [SPEED, STEERING] {
            let scale = if signal == STEERING { factor } else { 1.0 };
            let horizons = (0..set.horizons()).map(Some).chain(std::iter::once(None));
            for horizon in horizons {
                let (p, t) = set.columns(signal, horizon);
                for (name, value) in [("mae", mae(&p, &t)?), ("rmse", rmse(&p, &t)?)] {
                    metrics.push(MetricRow {
                        signal: SIGNALS[signal].to_string(),
                        horizon,
                        metric: name.to_string(),
                        value: value * scale,
                    });
                }
            }
        }
        let (p, t) = set.columns(STEERING, None);
        let sweep = sweep_alpha(&p, &t, metadata.max_steering_rad, alpha_points)?.scaled(factor);
        Ok(EvalReport { metadata, metrics, sweep })
    }

    pub fn metric(&self, signal: &str, horizon: Option<usize>, metric: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.signal == signal && m.horizon == horizon && m.metric == metric)
            .map(|m| m.value)
    }

    pub fn steering_mae(&self) -> f64 {
        self.metric("steering", None, "mae").expect("pooled steering row present")
    }

    pub fn speed_mae(&self) -> f64 {
        self.metric("speed", None, "mae").expect("pooled speed row present")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for m in &self.metrics {
            let h = m.horizon.map_or_else(|| "all".to_string(), |h| h.to_string());
            out.push_str(&format!("{},{},{},{}\n", m.signal, h, m.metric, m.value));
        }
        out
    }

    /// Writes `<stem>.csv`, `<stem>_sweep.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: String, text: String| {
            let path = dir.join(name);
            std::fs::File::create(&path)
                .and_then(|mut f| f.write_all(text.as_bytes()))
                .map_err(|e| Error::io(&path, e))
        };
        write(format!("{stem}.csv"), self.to_csv())?;
        write(format!("{stem}_sweep.csv"), self.sweep.to_csv())?;
        write(format!("{stem}.json"), serde_json::to_string_pretty(self)?)
    }
}

/// Predicts every test sample and reports the errors.
pub fn evaluate_model(
    params: &ModelParameters,
    samples: &[Sample],
    dataset: &str,
    unit: AngleUnit,
    alpha_points: usize,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation needs at least one sample"));
    }
    let set = PredictionSet::from_model(params, samples)?;
    let metadata = ReportMetadata {
        dataset: dataset.to_string(),
        model_fingerprint: params.fingerprint(),
        max_steering_rad: params.max_steering_rad,
        steering_unit: unit,
        samples: samples.len(),
        notes: Vec::new(),
    };
    EvalReport::from_predictions(&set, metadata, alpha_points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(unit: AngleUnit) -> ReportMetadata {
        ReportMetadata {
            dataset: "t".into(),
            model_fingerprint: "f".into(),
            max_steering_rad: 1.0,
            steering_unit: unit,
            samples: 2,
            notes: vec![],
        }
    }

    fn set() -> PredictionSet {
        let mut s = PredictionSet::default();
        s.push_sample(0, &[[10.0, 0.1], [11.0, 0.2]], &[[10.5, 0.0], [11.0, 0.4]]);
        s.push_sample(1, &[[9.0, -0.1], [8.0, 0.0]], &[[9.0, -0.3], [7.0, 0.1]]);
        s
    }

    #[test]
    fn report_rows_and_identities() {
        let r = EvalReport::from_predictions(&set(), meta(AngleUnit::Rad), 5).unwrap();
        // 2 signals × (2 horizons + pooled) × 2 metrics
        assert_eq!(r.metrics.len(), 12);
        assert_eq!(r.sweep.points[0].mae, Some(r.steering_mae()));
        assert!((r.metric("speed", Some(1), "mae").unwrap() - 0.5).abs() < 1e-12);
        assert!((r.steering_mae() - (0.1 + 0.2 + 0.2 + 0.1) / 4.0).abs() < 1e-12);
        let csv = r.to_csv();
        assert!(csv.contains("steering,all,mae,"));
        assert_eq!(csv.lines().count(), 13);
    }

    #[test]
    fn degrees_scale_steering_only() {
        let rad = EvalReport::from_predictions(&set(), meta(AngleUnit::Rad), 5).unwrap();
        let deg = EvalReport::from_predictions(&set(), meta(AngleUnit::Deg), 5).unwrap();
        assert!((deg.steering_mae() - rad.steering_mae().to_degrees()).abs() < 1e-12);
        assert_eq!(deg.speed_mae(), rad.speed_mae());
        assert!((deg.sweep.points[4].alpha - 1f64.to_degrees()).abs() < 1e-12);
    }

    #[test]
    fn duplicates_and_empty_sets_are_rejected() {
        let mut s = set();
        s.rows.push(s.rows[0]);
        assert!(s.validate().is_err());
        assert!(EvalReport::from_predictions(&PredictionSet::default(), meta(AngleUnit::Rad), 5).is_err());
        assert!("grad".parse::<AngleUnit>().is_err());
    }
}
