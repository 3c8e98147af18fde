use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::config::{Architecture, ModelConfig};
use crate::models::fusion::{Forecaster, SimFcModel, SimLstmModel, SingleHorizonModel};
use crate::models::layers::{prefixed, Module, ReluPattern};
use crate::tensor::Tensor;
use crate::types::{validate_sample, ForecastOutput, Sample, SampleContract};

/// Seed of the `index`-th independent stream derived from `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Network {
    IndFc(Vec<SingleHorizonModel>),
    SimFc(SimFcModel),
    SimLstm(SimLstmModel),
}

impl Network {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(match config.architecture {
            Architecture::MhIndFc => Network::IndFc(
                (0..config.input.k_out)
                    .map(|j| {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, j as u64));
                        SingleHorizonModel::new(config, &mut rng)
                    })
                    .collect::<Result<_>>()?,
            ),
            Architecture::MhSimFc => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Network::SimFc(SimFcModel::new(config, &mut rng)?)
            }
            Architecture::MhSimLstm => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Network::SimLstm(SimLstmModel::new(config, &mut rng)?)
            }
        })
    }

    /// Raw `(k_out, 2)` output, before any target de-standardization.
    pub fn forward(&self, sample: &Sample) -> Result<Vec<[f64; 2]>> {
        match self {
            Network::IndFc(models) => {
                let mut rows = Vec::with_capacity(models.len());
                for m in models {
                    rows.extend(m.forward(sample)?);
                }
                Ok(rows)
            }
            Network::SimFc(m) => m.forward(sample),
            Network::SimLstm(m) => m.forward(sample),
        }
    }

    /// Loss gradient for the whole network on one sample:
    /// `grad_rows = d loss / d output`.
    pub fn forward_backward(
        &self,
        sample: &Sample,
        grad_fn: impl Fn(&[[f64; 2]]) -> (f64, Vec<[f64; 2]>),
        grads: &mut Network,
    ) -> Result<f64> {
        match (self, grads) {
            (Network::IndFc(models), Network::IndFc(gs)) => {
                let mut rows = Vec::with_capacity(models.len());
                let mut caches = Vec::with_capacity(models.len());
                for m in models {
                    let (r, c) = m.forward_cached(sample)?;
                    rows.extend(r);
                    caches.push(c);
                }
                let (loss, grad_rows) = grad_fn(&rows);
                for (j, ((m, c), g)) in models.iter().zip(&caches).zip(gs.iter_mut()).enumerate() {
                    m.backward(c, &grad_rows[j..j + 1], g);
                }
                Ok(loss)
            }
            (Network::SimFc(m), Network::SimFc(g)) => {
                let (rows, cache) = m.forward_cached(sample)?;
                let (loss, grad_rows) = grad_fn(&rows);
                m.backward(&cache, &grad_rows, g);
                Ok(loss)
            }
            (Network::SimLstm(m), Network::SimLstm(g)) => {
                let (rows, cache) = m.forward_cached(sample)?;
                let (loss, grad_rows) = grad_fn(&rows);
                m.backward(&cache, &grad_rows, g);
                Ok(loss)
            }
            _ => Err(Error::Shape("gradient buffer does not match network".into())),
        }
    }

    /// On/off state of every ReLU unit for `sample`. Two parameter settings
    /// with equal patterns lie on the same linear piece of each ReLU.
    pub fn relu_pattern(&self, sample: &Sample) -> Result<Vec<bool>> {
        let mut out = Vec::new();
        match self {
            Network::IndFc(models) => {
                for m in models {
                    m.forward_cached(sample)?.1.relu_pattern(&mut out);
                }
            }
            Network::SimFc(m) => m.forward_cached(sample)?.1.relu_pattern(&mut out),
            Network::SimLstm(m) => m.forward_cached(sample)?.1.relu_pattern(&mut out),
        }
        Ok(out)
    }

    pub fn zeroed(&self) -> Network {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }
}

impl Module for Network {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        match self {
            Network::IndFc(models) => models
                .iter()
                .enumerate()
                .flat_map(|(j, m)| prefixed(&format!("horizon{j}"), m.named_tensors()))
                .collect(),
            Network::SimFc(m) => m.named_tensors(),
            Network::SimLstm(m) => m.named_tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Network::IndFc(models) => models.iter_mut().flat_map(|m| m.tensors_mut()).collect(),
            Network::SimFc(m) => m.tensors_mut(),
            Network::SimLstm(m) => m.tensors_mut(),
        }
    }
}

/// Per-signal affine map fit on training targets. When present it maps both
/// the CAN-window inputs and the targets into standardized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl TargetScaler {
    /// Fits mean and standard deviation per signal over every target row.
    pub fn fit(samples: &[Sample]) -> Result<Self> {
        let rows: Vec<[f64; 2]> = samples
            .iter()
            .flat_map(|s| s.targets.values.iter().copied())
            .collect();
        if rows.is_empty() {
            return Err(Error::Empty("cannot fit a target scaler on no samples"));
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; 2];
        let mut std = [0.0; 2];
        for s in 0..2 {
            mean[s] = rows.iter().map(|r| r[s]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[s] - mean[s]).powi(2)).sum::<f64>() / n;
            std[s] = if var > 1e-12 { var.sqrt() } else { 1.0 };
        }
        Ok(TargetScaler { mean, std })
    }

    pub fn normalize(&self, row: [f64; 2]) -> [f64; 2] {
        [
            (row[0] - self.mean[0]) / self.std[0],
            (row[1] - self.mean[1]) / self.std[1],
        ]
    }

    /// Copy of `sample` with its CAN-window states standardized.
    pub fn normalize_inputs(&self, sample: &Sample) -> Sample {
        let mut out = sample.clone();
        for s in &mut out.can.states {
            let [v, a] = self.normalize([s.speed_mps, s.steering_rad]);
            s.speed_mps = v;
            s.steering_rad = a;
        }
        out
    }

    pub fn denormalize(&self, row: [f64; 2]) -> [f64; 2] {
        [
            row[0] * self.std[0] + self.mean[0],
            row[1] * self.std[1] + self.mean[1],
        ]
    }
}

/// Θ = Θ_V ∪ Θ_C ∪ Θ_F together with the configuration that shaped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub network: Network,
    pub target_scaler: Option<TargetScaler>,
    /// Steering bound of the dataset the model serves; used to validate inputs.
    pub max_steering_rad: f64,
}

impl ModelParameters {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let network = Network::new(&config, seed)?;
        Ok(ModelParameters {
            config,
            network,
            target_scaler: None,
            max_steering_rad: std::f64::consts::PI,
        })
    }

    pub fn fingerprint(&self) -> String {
        self.config.fingerprint()
    }

    pub fn input_fingerprint(&self) -> String {
        self.config.input.fingerprint()
    }

    pub fn count_parameters(&self) -> usize {
        count_parameters(&self.network)
    }

    /// Pure forward pass in physical units.
    pub fn predict(&self, sample: &Sample) -> Result<ForecastOutput> {
        let actual = sample.input_spec().fingerprint();
        let expected = self.input_fingerprint();
        if actual != expected {
            return Err(Error::FingerprintMismatch { expected, actual });
        }
        let contract = SampleContract {
            input: self.config.input,
            max_steering_rad: self.max_steering_rad,
        };
        let violations = validate_sample(sample, &contract);
        if !violations.is_empty() {
            return Err(Error::InvalidSample(violations));
        }
        let values = match &self.target_scaler {
            Some(scaler) => {
                let mut v = self.network.forward(&scaler.normalize_inputs(sample))?;
                v.iter_mut().for_each(|r| *r = scaler.denormalize(*r));
                v
            }
            None => self.network.forward(sample)?,
        };
        let out = ForecastOutput { values };
        if !out.is_finite() {
            return Err(Error::InvalidInput("model produced a non-finite forecast".into()));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            magic: CHECKPOINT_MAGIC.to_string(),
            fingerprint: self.fingerprint(),
            config: self.config.clone(),
            target_scaler: self.target_scaler,
            max_steering_rad: self.max_steering_rad,
            tensors: self
                .network
                .named_tensors()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                })
                .collect(),
        };
        let out = File::create(path).map_err(|e| Error::io(path, e))?;
        bincode::serialize_into(BufWriter::new(out), &file)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let input = File::open(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile = bincode::deserialize_from(BufReader::new(input))?;
        if file.magic != CHECKPOINT_MAGIC {
            return Err(Error::Serialization(format!("{} is not a checkpoint", path.display())));
        }
        let actual = file.config.fingerprint();
        if actual != file.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: file.fingerprint,
                actual,
            });
        }
        let mut network = Network::new(&file.config, 0)?;
        let names: Vec<String> = network.named_tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != file.tensors.len() {
            return Err(Error::Shape(format!(
                "checkpoint holds {} tensors, configuration needs {}",
                file.tensors.len(),
                names.len()
            )));
        }
        for ((name, slot), stored) in names.iter().zip(network.tensors_mut()).zip(file.tensors) {
            if *name != stored.name || slot.shape != stored.shape {
                return Err(Error::Shape(format!(
                    "checkpoint tensor {} {:?} does not match {} {:?}",
                    stored.name, stored.shape, name, slot.shape
                )));
            }
            slot.data = stored.data;
        }
        Ok(ModelParameters {
            config: file.config,
            network,
            target_scaler: file.target_scaler,
            max_steering_rad: file.max_steering_rad,
        })
    }

    /// Loads and requires the embedded fingerprint to equal `expected`.
    pub fn load_expecting(path: &Path, expected: &str) -> Result<Self> {
        let params = ModelParameters::load(path)?;
        let actual = params.fingerprint();
        if actual != expected {
            return Err(Error::FingerprintMismatch {
                expected: expected.to_string(),
                actual,
            });
        }
        Ok(params)
    }
}

const CHECKPOINT_MAGIC: &str = "drivecast-checkpoint-v1";

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    magic: String,
    fingerprint: String,
    config: ModelConfig,
    target_scaler: Option<TargetScaler>,
    max_steering_rad: f64,
    tensors: Vec<NamedTensor>,
}

/// Exact number of scalar parameters.
pub fn count_parameters<M: Module + ?Sized>(module: &M) -> usize {
    module.parameter_count()
}
