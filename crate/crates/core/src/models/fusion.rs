//! The three fusion designs. Each owns its encoders so that a model is a
//! self-contained forward/backward unit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::config::ModelConfig;
use crate::models::encoders::{Encoders, EncodersCache};
use crate::models::layers::{prefixed, Dense, Lstm, LstmCache, Mlp, MlpCache, Module, ReluPattern};
use crate::tensor::Tensor;
use crate::types::{Representation, Sample, SPEED, STEERING};

/// A model that maps one sample to rows of `(speed, steering)` predictions.
pub trait Forecaster: Module + Clone {
    type Cache: ReluPattern;

    fn forward_cached(&self, sample: &Sample) -> Result<(Vec<[f64; 2]>, Self::Cache)>;

    /// Accumulates parameter gradients for the given output-row gradients.
    fn backward(&self, cache: &Self::Cache, grad_rows: &[[f64; 2]], grads: &mut Self);

    fn forward(&self, sample: &Sample) -> Result<Vec<[f64; 2]>> {
        Ok(self.forward_cached(sample)?.0)
    }

    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }
}

/// `[r_c, r_v]` with `r_v` flattened temporal-major.
pub fn fuse_concat(r_c: &[f64], r_v: &[f64]) -> Vec<f64> {
    let mut r = Vec::with_capacity(r_c.len() + r_v.len());
    r.extend_from_slice(r_c);
    r.extend_from_slice(r_v);
    r
}

fn head_widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// Splits the gradient of a fused vector back into `(r_c, r_v)` parts.
fn split_grad(grad: &[f64], r_c_len: usize) -> (&[f64], &[f64]) {
    grad.split_at(r_c_len)
}

/// One horizon of MH-IND-FC: its own CPM, VPM and two single-output heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleHorizonModel {
    pub encoders: Encoders,
    pub speed_head: Mlp,
    pub steering_head: Mlp,
}

pub struct FcCache {
    encoders: EncodersCache,
    r_c_len: usize,
    speed: MlpCache,
    steering: MlpCache,
}

impl ReluPattern for FcCache {
    fn relu_pattern(&self, out: &mut Vec<bool>) {
        self.encoders.relu_pattern(out);
        self.speed.relu_pattern(out);
        self.steering.relu_pattern(out);
    }
}

impl SingleHorizonModel {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let fused = config.fused_len()?;
        let encoders = Encoders::new(config, rng);
        let widths = head_widths(fused, &config.fusion.ind_fc_hidden, 1);
        Ok(SingleHorizonModel {
            encoders,
            speed_head: Mlp::new(&widths, rng),
            steering_head: Mlp::new(&widths, rng),
        })
    }
}

impl Forecaster for SingleHorizonModel {
    type Cache = FcCache;

    fn forward_cached(&self, sample: &Sample) -> Result<(Vec<[f64; 2]>, FcCache)> {
        let (rep, encoders) = self.encoders.encode(sample)?;
        let r = fuse_concat(&rep.r_c, &rep.r_v);
        let (speed, speed_cache) = self.speed_head.forward_cached(&r);
        let (steering, steering_cache) = self.steering_head.forward_cached(&r);
        Ok((
            vec![[speed[0], steering[0]]],
            FcCache {
                encoders,
                r_c_len: rep.r_c.len(),
                speed: speed_cache,
                steering: steering_cache,
            },
        ))
    }

    fn backward(&self, cache: &FcCache, grad_rows: &[[f64; 2]], grads: &mut Self) {
        let g = grad_rows[0];
        let mut gr = self
            .speed_head
            .backward(&cache.speed, &[g[SPEED]], &mut grads.speed_head, true)
            .unwrap();
        let gs = self
            .steering_head
            .backward(&cache.steering, &[g[STEERING]], &mut grads.steering_head, true)
            .unwrap();
        gr.iter_mut().zip(&gs).for_each(|(a, b)| *a += b);
        let (gc, gv) = split_grad(&gr, cache.r_c_len);
        self.encoders.backward(&cache.encoders, gc, gv, &mut grads.encoders);
    }
}

impl Module for SingleHorizonModel {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.encoders.named_tensors();
        out.extend(prefixed("speed_head", self.speed_head.named_tensors()));
        out.extend(prefixed("steering_head", self.steering_head.named_tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoders.tensors_mut();
        out.extend(self.speed_head.tensors_mut());
        out.extend(self.steering_head.tensors_mut());
        out
    }
}

/// MH-SIM-FC: two heads, each emitting all `k_out` horizons of one signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFcModel {
    pub encoders: Encoders,
    pub speed_head: Mlp,
    pub steering_head: Mlp,
}

impl SimFcModel {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let fused = config.fused_len()?;
        let encoders = Encoders::new(config, rng);
        let widths = head_widths(fused, &config.fusion.sim_fc_hidden, config.input.k_out);
        Ok(SimFcModel {
            encoders,
            speed_head: Mlp::new(&widths, rng),
            steering_head: Mlp::new(&widths, rng),
        })
    }

    /// Fusion only: fused vector to `(k_out, 2)`.
    pub fn fuse_forward(&self, r: &[f64]) -> Result<Vec<[f64; 2]>> {
        let want = self.speed_head.layers[0].inputs();
        if r.len() != want {
            return Err(Error::Shape(format!(
                "fused vector has length {}, head expects {want}",
                r.len()
            )));
        }
        let speed = self.speed_head.forward(r);
        let steering = self.steering_head.forward(r);
        Ok(speed.into_iter().zip(steering).map(|(a, b)| [a, b]).collect())
    }
}

impl Forecaster for SimFcModel {
    type Cache = FcCache;

    fn forward_cached(&self, sample: &Sample) -> Result<(Vec<[f64; 2]>, FcCache)> {
        let (rep, encoders) = self.encoders.encode(sample)?;
        let r = fuse_concat(&rep.r_c, &rep.r_v);
        let (speed, speed_cache) = self.speed_head.forward_cached(&r);
        let (steering, steering_cache) = self.steering_head.forward_cached(&r);
        let rows = speed.into_iter().zip(steering).map(|(a, b)| [a, b]).collect();
        Ok((
            rows,
            FcCache {
                encoders,
                r_c_len: rep.r_c.len(),
                speed: speed_cache,
                steering: steering_cache,
            },
        ))
    }

    fn backward(&self, cache: &FcCache, grad_rows: &[[f64; 2]], grads: &mut Self) {
        let g_speed: Vec<f64> = grad_rows.iter().map(|r| r[SPEED]).collect();
        let g_steer: Vec<f64> = grad_rows.iter().map(|r| r[STEERING]).collect();
        let mut gr = self
            .speed_head
            .backward(&cache.speed, &g_speed, &mut grads.speed_head, true)
            .unwrap();
        let gs = self
            .steering_head
            .backward(&cache.steering, &g_steer, &mut grads.steering_head, true)
            .unwrap();
        gr.iter_mut().zip(&gs).for_each(|(a, b)| *a += b);
        let (gc, gv) = split_grad(&gr, cache.r_c_len);
        self.encoders.backward(&cache.encoders, gc, gv, &mut grads.encoders);
    }
}

impl Module for SimFcModel {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.encoders.named_tensors();
        out.extend(prefixed("speed_head", self.speed_head.named_tensors()));
        out.extend(prefixed("steering_head", self.steering_head.named_tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoders.tensors_mut();
        out.extend(self.speed_head.tensors_mut());
        out.extend(self.steering_head.tensors_mut());
        out
    }
}

/// MH-SIM-LSTM: per-step `[r_c, r_v[t]]`, shared reduction, stacked LSTMs,
/// shared per-step decoder. Step `j` decodes horizon `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLstmModel {
    pub encoders: Encoders,
    pub reduce: Dense,
    pub lstms: Vec<Lstm>,
    pub decoder: Mlp,
    pub steps: usize,
}

pub struct LstmFusionCache {
    step_inputs: Vec<Vec<f64>>,
    lstms: Vec<LstmCache>,
    decoder: Vec<MlpCache>,
    r_c_len: usize,
    c_v: usize,
}

pub struct SimLstmCache {
    encoders: EncodersCache,
    fusion: LstmFusionCache,
}

impl ReluPattern for SimLstmCache {
    fn relu_pattern(&self, out: &mut Vec<bool>) {
        self.encoders.relu_pattern(out);
        self.fusion.decoder.iter().for_each(|d| d.relu_pattern(out));
    }
}

impl SimLstmModel {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let (_, c_v) = config.r_v_dims()?;
        let step_in = config.r_c_len() + c_v;
        let encoders = Encoders::new(config, rng);
        let reduce = Dense::new(step_in, config.fusion.lstm_reduce, rng);
        let mut lstms = Vec::new();
        let mut width = config.fusion.lstm_reduce;
        for &hidden in &config.fusion.lstm_hidden {
            lstms.push(Lstm::new(width, hidden, rng));
            width = hidden;
        }
        let decoder = Mlp::new(&head_widths(width, &config.fusion.decoder_hidden, 2), rng);
        Ok(SimLstmModel {
            encoders,
            reduce,
            lstms,
            decoder,
            steps: config.input.k_out,
        })
    }

    /// Fusion only: `(r_c, r_v)` to `(k_out, 2)`.
    pub fn fuse_forward(&self, rep: &Representation) -> Result<Vec<[f64; 2]>> {
        Ok(self.fuse_forward_cached(rep)?.0)
    }

    fn fuse_forward_cached(&self, rep: &Representation) -> Result<(Vec<[f64; 2]>, LstmFusionCache)> {
        let has_vision = rep.c_v > 0;
        if has_vision && rep.t_v != self.steps {
            return Err(Error::Shape(format!(
                "r_v has {} temporal steps, expected {}",
                rep.t_v, self.steps
            )));
        }
        if rep.r_c.len() + rep.c_v != self.reduce.inputs() {
            return Err(Error::Shape(format!(
                "per-step input width {} != reduction input {}",
                rep.r_c.len() + rep.c_v,
                self.reduce.inputs()
            )));
        }
        let step_inputs: Vec<Vec<f64>> = (0..self.steps)
            .map(|t| {
                let r_v_t = if has_vision {
                    &rep.r_v[t * rep.c_v..(t + 1) * rep.c_v]
                } else {
                    &[][..]
                };
                fuse_concat(&rep.r_c, r_v_t)
            })
            .collect();
        let mut seq: Vec<Vec<f64>> = step_inputs.iter().map(|x| self.reduce.forward(x)).collect();
        let mut lstm_caches = Vec::with_capacity(self.lstms.len());
        for lstm in &self.lstms {
            let (hs, cache) = lstm.forward(&seq);
            lstm_caches.push(cache);
            seq = hs;
        }
        let mut rows = Vec::with_capacity(self.steps);
        let mut decoder = Vec::with_capacity(self.steps);
        for h in &seq {
            let (y, cache) = self.decoder.forward_cached(h);
            rows.push([y[0], y[1]]);
            decoder.push(cache);
        }
        Ok((
            rows,
            LstmFusionCache {
                step_inputs,
                lstms: lstm_caches,
                decoder,
                r_c_len: rep.r_c.len(),
                c_v: rep.c_v,
            },
        ))
    }

    /// Returns gradients w.r.t. `(r_c, r_v)`.
    fn fuse_backward(
        &self,
        cache: &LstmFusionCache,
        grad_rows: &[[f64; 2]],
        grads: &mut SimLstmModel,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut grad_seq: Vec<Vec<f64>> = grad_rows
            .iter()
            .zip(&cache.decoder)
            .map(|(g, c)| {
                self.decoder
                    .backward(c, &g[..], &mut grads.decoder, true)
                    .unwrap()
            })
            .collect();
        for (i, lstm) in self.lstms.iter().enumerate().rev() {
            grad_seq = lstm
                .backward(&cache.lstms[i], &grad_seq, &mut grads.lstms[i], true)
                .unwrap();
        }
        let mut grad_r_c = vec![0.0; cache.r_c_len];
        let mut grad_r_v = vec![0.0; self.steps * cache.c_v];
        for (t, (x, g)) in cache.step_inputs.iter().zip(&grad_seq).enumerate() {
            let gx = self.reduce.backward(x, g, &mut grads.reduce);
            grad_r_c.iter_mut().zip(&gx).for_each(|(a, b)| *a += b);
            grad_r_v[t * cache.c_v..(t + 1) * cache.c_v].copy_from_slice(&gx[cache.r_c_len..]);
        }
        (grad_r_c, grad_r_v)
    }
}

impl Forecaster for SimLstmModel {
    type Cache = SimLstmCache;

    fn forward_cached(&self, sample: &Sample) -> Result<(Vec<[f64; 2]>, SimLstmCache)> {
        let (rep, encoders) = self.encoders.encode(sample)?;
        let (rows, fusion) = self.fuse_forward_cached(&rep)?;
        Ok((rows, SimLstmCache { encoders, fusion }))
    }

    fn backward(&self, cache: &SimLstmCache, grad_rows: &[[f64; 2]], grads: &mut Self) {
        let (gc, gv) = self.fuse_backward(&cache.fusion, grad_rows, grads);
        self.encoders.backward(&cache.encoders, &gc, &gv, &mut grads.encoders);
    }
}

impl Module for SimLstmModel {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.encoders.named_tensors();
        out.extend(prefixed("reduce", self.reduce.named_tensors()));
        for (i, l) in self.lstms.iter().enumerate() {
            out.extend(prefixed(&format!("lstm{i}"), l.named_tensors()));
        }
        out.extend(prefixed("decoder", self.decoder.named_tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoders.tensors_mut();
        out.extend(self.reduce.tensors_mut());
        for l in &mut self.lstms {
            out.extend(l.tensors_mut());
        }
        out.extend(self.decoder.tensors_mut());
        out
    }
}
