use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Module;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}` (expected sgd or adam)"))),
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update; `params` and `grads` must share tensor layout.
    pub fn step<M: Module>(&mut self, params: &mut M, grads: &M) {
        let grads = grads.named_tensors();
        let mut params = params.tensors_mut();
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, (_, g)) in params.iter_mut().zip(&grads) {
                    for (w, d) in p.data.iter_mut().zip(&g.data) {
                        *w -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|(_, g)| vec![0.0; g.len()]).collect();
                    self.v = self.m.clone();
                }
                let bc1 = 1.0 - BETA1.powi(self.step as i32);
                let bc2 = 1.0 - BETA2.powi(self.step as i32);
                for (i, (p, (_, g))) in params.iter_mut().zip(&grads).enumerate() {
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for (k, (w, d)) in p.data.iter_mut().zip(&g.data).enumerate() {
                        m[k] = BETA1 * m[k] + (1.0 - BETA1) * d;
                        v[k] = BETA2 * v[k] + (1.0 - BETA2) * d * d;
                        let m_hat = m[k] / bc1;
                        let v_hat = v[k] / bc2;
                        *w -= self.lr * m_hat / (v_hat.sqrt() + EPS);
                    }
                }
            }
        }
    }
}
