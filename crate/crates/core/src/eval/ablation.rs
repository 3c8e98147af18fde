use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::report::{evaluate_model, AngleUnit, EvalReport};
use crate::models::{Architecture, ModelConfig};
use crate::training::{train, TrainConfig};
use crate::types::Sample;

/// Published with/without-vision steering error ratios on the two full
/// datasets, kept as context.
pub const REFERENCE_VISION_RATIOS: [(&str, f64); 2] = [("Udacity", 0.566), ("Comma2k19", 0.669)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub with_vision: EvalReport,
    pub without_vision: EvalReport,
    /// Pooled MAE with vision divided by MAE without, per `[speed, steering]`.
    pub ratio: [f64; 2],
    pub reference_ratios: Vec<(String, f64)>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        format!(
            "signal,with_vision_mae,without_vision_mae,ratio\nspeed,{},{},{}\nsteering,{},{},{}\n",
            self.with_vision.speed_mae(),
            self.without_vision.speed_mae(),
            self.ratio[0],
            self.with_vision.steering_mae(),
            self.without_vision.steering_mae(),
            self.ratio[1],
        )
    }
}

/// Trains the sequence-to-sequence model with and without the video encoder
/// under identical seeds and data, then evaluates both on `test`.
pub fn ablate_vision(
    train_samples: &[Sample],
    test_samples: &[Sample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    dataset: &str,
    alpha_points: usize,
) -> Result<AblationReport> {
    if model_config.architecture != Architecture::MhSimLstm {
        return Err(Error::Config("vision ablation applies to mh-sim-lstm only".into()));
    }
    let mut with_cfg = model_config.clone();
    with_cfg.use_vision = true;
    let mut without_cfg = model_config.clone();
    without_cfg.use_vision = false;

    let (with_params, _) = train(&with_cfg, train_samples, train_config)?;
    let (without_params, _) = train(&without_cfg, train_samples, train_config)?;
    let unit = AngleUnit::Rad;
    let mut with_vision = evaluate_model(&with_params, test_samples, dataset, unit, alpha_points)?;
    let mut without_vision = evaluate_model(&without_params, test_samples, dataset, unit, alpha_points)?;
    with_vision.metadata.notes.push("variant: with vision".into());
    without_vision.metadata.notes.push("variant: without vision".into());
    let ratio = [
        with_vision.speed_mae() / without_vision.speed_mae(),
        with_vision.steering_mae() / without_vision.steering_mae(),
    ];
    Ok(AblationReport {
        with_vision,
        without_vision,
        ratio,
        reference_ratios: REFERENCE_VISION_RATIOS
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
    })
}
