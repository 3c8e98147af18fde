use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRAIN_LOG_HEADER: &str = "step,epoch,loss";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    /// Mean per-sample loss over the batch.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    /// Sample-weighted mean loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub seed: u64,
    pub config_fingerprint: String,
}

impl TrainLog {
    pub fn first_epoch_loss(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn final_epoch_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    /// Step losses only; wall-clock times stay out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for r in &self.steps {
            out.push_str(&format!("{},{},{}\n", r.step, r.epoch, r.loss));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}
