use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Architecture;
use crate::training::optimizer::OptimizerKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Per-signal `(speed, steering)` loss weights; `None` means equal.
    pub loss_weights: Option<[f64; 2]>,
    /// Write a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub horizons_s: Vec<f64>,
    /// Per-epoch flip augmentation probability.
    pub flip_probability: f64,
    /// Fit a target standardizer on the training samples.
    pub standardize_targets: bool,
    pub max_steering_rad: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::MhSimLstm,
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            loss_weights: None,
            checkpoint_every: 0,
            checkpoint_dir: None,
            horizons_s: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            flip_probability: 0.5,
            standardize_targets: false,
            max_steering_rad: std::f64::consts::PI,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> [f64; 2] {
        self.loss_weights.unwrap_or([1.0, 1.0])
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs == 0 || self.batch_size == 0 {
            problems.push("epochs and batch_size must be at least 1".to_string());
        }
        // zero is accepted so a run can be replayed without updates
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if let Some(w) = self.loss_weights {
            if !w.iter().all(|x| *x > 0.0 && x.is_finite()) {
                problems.push(format!("loss weights must be positive, got {w:?}"));
            }
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            problems.push(format!("flip_probability must lie in [0, 1], got {}", self.flip_probability));
        }
        if self.horizons_s.is_empty() || self.horizons_s.windows(2).any(|w| w[1] <= w[0]) || self.horizons_s[0] <= 0.0 {
            problems.push(format!("horizons must be positive and strictly increasing, got {:?}", self.horizons_s));
        }
        if !(self.max_steering_rad > 0.0) {
            problems.push(format!("max_steering_rad must be positive, got {}", self.max_steering_rad));
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            problems.push("checkpoint_every needs a checkpoint directory".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
