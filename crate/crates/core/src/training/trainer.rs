//! Mini-batch training loop.

use std::borrow::Cow;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::augment::flip_sample;
use crate::error::{Error, Result};
use crate::models::{derive_seed, Forecaster, ModelConfig, ModelParameters, Network, SingleHorizonModel, TargetScaler};
use crate::training::config::TrainConfig;
use crate::training::log::{StepRecord, TrainLog};
use crate::training::loss::loss_and_grad;
use crate::training::optimizer::Optimizer;
use crate::types::{validate_sample, Sample, SampleContract};

/// Stream index reserved for shuffling and augmentation draws.
const TRAIN_STREAM: u64 = 0x5452_4149_4e;

#[derive(Debug, Clone, Copy)]
enum Rows {
    All,
    Single(usize),
}

/// Optimizer, random stream and shuffle order of one independently trained
/// model.
struct ModelTrainer<F: Forecaster> {
    model: F,
    optimizer: Optimizer,
    rng: ChaCha8Rng,
    rows: Rows,
    order: Vec<usize>,
}

struct StepContext<'a> {
    samples: &'a [Sample],
    cfg: &'a TrainConfig,
    scaler: Option<&'a TargetScaler>,
}

impl<F: Forecaster> ModelTrainer<F> {
    fn new(model: F, model_seed: u64, rows: Rows, cfg: &TrainConfig, n: usize) -> Self {
        ModelTrainer {
            model,
            optimizer: Optimizer::new(cfg.optimizer, cfg.learning_rate),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(model_seed, TRAIN_STREAM)),
            rows,
            order: (0..n).collect(),
        }
    }

    fn begin_epoch(&mut self) {
        self.order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        self.order.shuffle(&mut self.rng);
    }

    /// One update on batch `b`; returns the mean per-sample loss.
    fn step(&mut self, b: usize, ctx: &StepContext<'_>) -> Result<f64> {
        let lo = b * ctx.cfg.batch_size;
        let hi = (lo + ctx.cfg.batch_size).min(self.order.len());
        let scale = 1.0 / (hi - lo) as f64;
        let weights = ctx.cfg.weights();
        let mut grads = self.model.zeroed();
        let mut total = 0.0;
        for &idx in &self.order[lo..hi] {
            let flip = self.rng.gen::<f64>() < ctx.cfg.flip_probability;
            let mut sample: Cow<'_, Sample> = if flip {
                Cow::Owned(flip_sample(&ctx.samples[idx]))
            } else {
                Cow::Borrowed(&ctx.samples[idx])
            };
            if let Some(s) = ctx.scaler {
                sample = Cow::Owned(s.normalize_inputs(&sample));
            }
            let mut target: Vec<[f64; 2]> = match self.rows {
                Rows::All => sample.targets.values.clone(),
                Rows::Single(j) => vec![sample.targets.values[j]],
            };
            if let Some(s) = ctx.scaler {
                target.iter_mut().for_each(|r| *r = s.normalize(*r));
            }
            let (pred, cache) = self.model.forward_cached(&sample)?;
            let (l, mut g) = loss_and_grad(&pred, &target, weights).map_err(|e| match e {
                Error::InvalidInput(_) => Error::InvalidInput("model produced a non-finite output".into()),
                other => other,
            })?;
            g.iter_mut().for_each(|r| {
                r[0] *= scale;
                r[1] *= scale;
            });
            self.model.backward(&cache, &g, &mut grads);
            total += l;
        }
        self.optimizer.step(&mut self.model, &grads);
        Ok(total * scale)
    }
}

enum Trainers {
    Ind(Vec<ModelTrainer<SingleHorizonModel>>),
    SimFc(ModelTrainer<crate::models::SimFcModel>),
    SimLstm(ModelTrainer<crate::models::SimLstmModel>),
}

impl Trainers {
    fn new(network: Network, seed: u64, cfg: &TrainConfig, n: usize) -> Self {
        match network {
            Network::IndFc(models) => Trainers::Ind(
                models
                    .into_iter()
                    .enumerate()
                    .map(|(j, m)| ModelTrainer::new(m, derive_seed(seed, j as u64), Rows::Single(j), cfg, n))
                    .collect(),
            ),
            Network::SimFc(m) => Trainers::SimFc(ModelTrainer::new(m, seed, Rows::All, cfg, n)),
            Network::SimLstm(m) => Trainers::SimLstm(ModelTrainer::new(m, seed, Rows::All, cfg, n)),
        }
    }

    fn begin_epoch(&mut self) {
        match self {
            Trainers::Ind(ts) => ts.iter_mut().for_each(|t| t.begin_epoch()),
            Trainers::SimFc(t) => t.begin_epoch(),
            Trainers::SimLstm(t) => t.begin_epoch(),
        }
    }

    /// Independent horizon models step in lockstep; their losses add up to
    /// the full multi-horizon loss.
    fn step(&mut self, b: usize, ctx: &StepContext<'_>) -> Result<f64> {
        match self {
            Trainers::Ind(ts) => {
                let mut total = 0.0;
                for t in ts.iter_mut() {
                    total += t.step(b, ctx)?;
                }
                Ok(total)
            }
            Trainers::SimFc(t) => t.step(b, ctx),
            Trainers::SimLstm(t) => t.step(b, ctx),
        }
    }

    fn network(&self) -> Network {
        match self {
            Trainers::Ind(ts) => Network::IndFc(ts.iter().map(|t| t.model.clone()).collect()),
            Trainers::SimFc(t) => Network::SimFc(t.model.clone()),
            Trainers::SimLstm(t) => Network::SimLstm(t.model.clone()),
        }
    }
}

fn check_inputs(model_config: &ModelConfig, samples: &[Sample], cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    model_config.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("training needs at least one sample"));
    }
    if model_config.architecture != cfg.architecture {
        return Err(Error::Config(format!(
            "model configuration is {} but training asks for {}",
            model_config.architecture, cfg.architecture
        )));
    }
    if cfg.horizons_s.len() != model_config.input.k_out {
        return Err(Error::Config(format!(
            "{} horizons configured for a model with k_out = {}",
            cfg.horizons_s.len(),
            model_config.input.k_out
        )));
    }
    let contract = SampleContract {
        input: model_config.input,
        max_steering_rad: cfg.max_steering_rad,
    };
    for (i, s) in samples.iter().enumerate() {
        let violations = validate_sample(s, &contract);
        if !violations.is_empty() {
            return Err(Error::InvalidSample(
                violations.into_iter().map(|v| format!("sample {i}: {v}")).collect(),
            ));
        }
        let same = s
            .targets
            .horizons_s
            .iter()
            .zip(&cfg.horizons_s)
            .all(|(a, b)| (a - b).abs() < 1e-9);
        if !same {
            return Err(Error::Config(format!(
                "sample {i} has horizons {:?}, training expects {:?}",
                s.targets.horizons_s, cfg.horizons_s
            )));
        }
    }
    Ok(())
}

fn write_checkpoint(params: &ModelParameters, dir: &Path, step: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    params.save(&dir.join(format!("checkpoint-step{step:06}.bin")))
}

/// Trains a freshly initialized model of `model_config` on `samples`.
///
/// Initialization, shuffling and augmentation all derive from `cfg.seed`, so
/// a fixed seed reproduces the loss trace bit for bit.
pub fn train(model_config: &ModelConfig, samples: &[Sample], cfg: &TrainConfig) -> Result<(ModelParameters, TrainLog)> {
    check_inputs(model_config, samples, cfg)?;
    let mut params = ModelParameters::new(model_config.clone(), cfg.seed)?;
    params.max_steering_rad = cfg.max_steering_rad;
    if cfg.standardize_targets {
        params.target_scaler = Some(TargetScaler::fit(samples)?);
    }
    let scaler = params.target_scaler;
    let ctx = StepContext {
        samples,
        cfg,
        scaler: scaler.as_ref(),
    };
    let mut trainers = Trainers::new(params.network.clone(), cfg.seed, cfg, samples.len());
    let n_batches = samples.len().div_ceil(cfg.batch_size);
    let mut log = TrainLog {
        steps: Vec::with_capacity(cfg.epochs * n_batches),
        epoch_losses: Vec::with_capacity(cfg.epochs),
        epoch_seconds: Vec::with_capacity(cfg.epochs),
        seed: cfg.seed,
        config_fingerprint: model_config.fingerprint(),
    };

    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        trainers.begin_epoch();
        let mut weighted = 0.0;
        for b in 0..n_batches {
            step += 1;
            let loss = trainers.step(b, &ctx)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { step, epoch, loss });
            }
            let len = ((b + 1) * cfg.batch_size).min(samples.len()) - b * cfg.batch_size;
            weighted += loss * len as f64;
            log.steps.push(StepRecord { step, epoch, loss });
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                params.network = trainers.network();
                write_checkpoint(&params, cfg.checkpoint_dir.as_deref().unwrap(), step)?;
            }
        }
        log.epoch_losses.push(weighted / samples.len() as f64);
        log.epoch_seconds.push(started.elapsed().as_secs_f64());
    }
    params.network = trainers.network();
    Ok((params, log))
}

/// Trains one horizon model of MH-IND-FC on its own, exactly as [`train`]
/// does inside the lockstep loop. Returns the model and its epoch losses.
pub fn train_single_horizon(
    model: SingleHorizonModel,
    horizon: usize,
    model_seed: u64,
    samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<(SingleHorizonModel, Vec<f64>)> {
    let scaler = if cfg.standardize_targets { Some(TargetScaler::fit(samples)?) } else { None };
    let ctx = StepContext {
        samples,
        cfg,
        scaler: scaler.as_ref(),
    };
    let mut t = ModelTrainer::new(model, model_seed, Rows::Single(horizon), cfg, samples.len());
    let n_batches = samples.len().div_ceil(cfg.batch_size);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        t.begin_epoch();
        let mut weighted = 0.0;
        for b in 0..n_batches {
            let len = ((b + 1) * cfg.batch_size).min(samples.len()) - b * cfg.batch_size;
            weighted += t.step(b, &ctx)? * len as f64;
        }
        losses.push(weighted / samples.len() as f64);
    }
    Ok((t.model, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Architecture, Module};
    use crate::types::fixtures::well_formed;
    use crate::types::InputSpec;

    fn tiny_config(arch: Architecture) -> ModelConfig {
        let mut cfg = ModelConfig::desk(arch);
        cfg.input = InputSpec {
            frame_height: 8,
            frame_width: 8,
            ..cfg.input
        };
        cfg.vpm = crate::models::VpmConfig::desk(8);
        cfg
    }

    fn tiny_samples(n: usize, spec: InputSpec) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..n)
            .map(|_| {
                let mut s = well_formed(spec, 1.0);
                s.clip.frames.iter_mut().for_each(|v| *v = rng.gen());
                for st in &mut s.can.states {
                    st.speed_mps = rng.gen_range(5.0..15.0);
                    st.steering_rad = rng.gen_range(-0.3..0.3);
                }
                for r in &mut s.targets.values {
                    *r = [rng.gen_range(5.0..15.0), rng.gen_range(-0.3..0.3)];
                }
                s
            })
            .collect()
    }

    fn train_cfg(arch: Architecture) -> TrainConfig {
        TrainConfig {
            architecture: arch,
            epochs: 2,
            batch_size: 3,
            flip_probability: 0.5,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn same_seed_same_trace_for_every_architecture() {
        for arch in Architecture::ALL {
            let mc = tiny_config(arch);
            let samples = tiny_samples(7, mc.input);
            let cfg = train_cfg(arch);
            let (a, la) = train(&mc, &samples, &cfg).unwrap();
            let (b, lb) = train(&mc, &samples, &cfg).unwrap();
            assert_eq!(la.steps, lb.steps);
            assert_eq!(a.network, b.network);
            assert_eq!(la.steps.len(), 2 * 3);
            assert!(la.steps.windows(2).all(|w| w[1].step == w[0].step + 1));
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_untouched() {
        let mc = tiny_config(Architecture::MhSimFc);
        let samples = tiny_samples(5, mc.input);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..train_cfg(Architecture::MhSimFc)
        };
        let (trained, _) = train(&mc, &samples, &cfg).unwrap();
        let fresh = ModelParameters::new(mc, cfg.seed).unwrap();
        assert_eq!(trained.network, fresh.network);
    }

    #[test]
    fn independent_horizons_train_identically_in_lockstep_or_alone() {
        let mc = tiny_config(Architecture::MhIndFc);
        let samples = tiny_samples(6, mc.input);
        let cfg = train_cfg(Architecture::MhIndFc);
        let (joint, _) = train(&mc, &samples, &cfg).unwrap();
        let Network::IndFc(fresh) = Network::new(&mc, cfg.seed).unwrap() else { unreachable!() };
        let Network::IndFc(joint) = joint.network else { unreachable!() };
        // train the horizons in reverse order to rule out hidden coupling
        for (j, m) in fresh.into_iter().enumerate().rev() {
            let (alone, _) = train_single_horizon(m, j, derive_seed(cfg.seed, j as u64), &samples, &cfg).unwrap();
            assert_eq!(alone, joint[j]);
        }
    }

    #[test]
    fn checkpoints_follow_the_cadence() {
        let dir = tempfile::tempdir().unwrap();
        let mc = tiny_config(Architecture::MhSimLstm);
        let samples = tiny_samples(4, mc.input);
        let cfg = TrainConfig {
            batch_size: 2,
            epochs: 2,
            checkpoint_every: 3,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..train_cfg(Architecture::MhSimLstm)
        };
        train(&mc, &samples, &cfg).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, vec!["checkpoint-step000003.bin"]);
        let loaded = ModelParameters::load(&dir.path().join(&names[0])).unwrap();
        assert_eq!(loaded.config, mc);
    }

    #[test]
    fn divergence_is_reported() {
        let mc = tiny_config(Architecture::MhSimFc);
        let mut samples = tiny_samples(4, mc.input);
        samples.iter_mut().for_each(|s| s.targets.values.iter_mut().for_each(|r| r[0] = 1e300));
        let cfg = TrainConfig {
            optimizer: crate::training::optimizer::OptimizerKind::Sgd,
            ..train_cfg(Architecture::MhSimFc)
        };
        let cfg = TrainConfig { max_steering_rad: 1.0, ..cfg };
        assert!(matches!(train(&mc, &samples, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mc = tiny_config(Architecture::MhSimFc);
        let cfg = train_cfg(Architecture::MhSimFc);
        assert!(matches!(train(&mc, &[], &cfg), Err(Error::Empty(_))));
        let samples = tiny_samples(2, mc.input);
        assert!(train(&mc, &samples, &train_cfg(Architecture::MhSimLstm)).is_err());
        let mut bad = samples.clone();
        bad[1].can.states[0].speed_mps = -1.0;
        assert!(matches!(train(&mc, &bad, &cfg), Err(Error::InvalidSample(_))));
    }

    #[test]
    fn standardized_training_predicts_in_physical_units() {
        let mc = tiny_config(Architecture::MhSimFc);
        let samples = tiny_samples(6, mc.input);
        let cfg = TrainConfig {
            standardize_targets: true,
            epochs: 1,
            ..train_cfg(Architecture::MhSimFc)
        };
        let (params, _) = train(&mc, &samples, &cfg).unwrap();
        let scaler = params.target_scaler.unwrap();
        assert!((scaler.mean[0] - 10.0).abs() < 2.0);
        let out = params.predict(&samples[0]).unwrap();
        let raw = params.network.forward(&scaler.normalize_inputs(&samples[0])).unwrap();
        assert_eq!(out.values[0], scaler.denormalize(raw[0]));
        assert!(params.count_parameters() > 0);
        let _ = params.network.parameter_count();
    }
}
