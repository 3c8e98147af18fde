//! CAN encoder (1D convolutions) and video encoder (3D convolutions with
//! spatial global average pooling).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::config::{CpmConfig, ModelConfig, VpmConfig};
use crate::models::conv3d::{Conv3d, Conv3dCache};
use crate::models::layers::{
    prefixed, push_active, relu_backward_inplace, relu_inplace, Conv1d, Module, ReluPattern,
};
use crate::tensor::Tensor;
use crate::types::{CanWindow, InputSpec, Representation, Sample, VideoClip};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpm {
    pub layers: Vec<Conv1d>,
    pub k_in: usize,
}

#[derive(Debug, Clone)]
pub struct CpmCache {
    /// Input of each layer (post-ReLU output of the previous one).
    inputs: Vec<(Vec<f64>, usize)>,
}

impl ReluPattern for CpmCache {
    fn relu_pattern(&self, out: &mut Vec<bool>) {
        self.inputs.iter().skip(1).for_each(|(x, _)| push_active(x, out));
    }
}

impl Cpm {
    pub fn new<R: Rng + ?Sized>(config: &CpmConfig, k_in: usize, rng: &mut R) -> Self {
        let layers = config
            .channels
            .windows(2)
            .map(|c| {
                Conv1d::new(
                    c[0],
                    c[1],
                    config.kernel_size,
                    config.stride,
                    config.padding,
                    rng,
                )
            })
            .collect();
        Cpm { layers, k_in }
    }

    /// Channel-major `(2, k_in)`: speeds then steering angles.
    pub fn input_of(can: &CanWindow) -> Vec<f64> {
        can.states
            .iter()
            .map(|s| s.speed_mps)
            .chain(can.states.iter().map(|s| s.steering_rad))
            .collect()
    }

    pub fn forward(&self, can: &CanWindow) -> Result<(Vec<f64>, CpmCache)> {
        if can.states.len() != self.k_in {
            return Err(Error::Shape(format!(
                "CPM expects a window of {} states, got {}",
                self.k_in,
                can.states.len()
            )));
        }
        let mut x = Cpm::input_of(can);
        let mut len = self.k_in;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&x, len);
            if i < last {
                relu_inplace(&mut y);
            }
            inputs.push((std::mem::replace(&mut x, y), len));
            len = layer.out_len(len);
        }
        Ok((x, CpmCache { inputs }))
    }

    pub fn backward(&self, cache: &CpmCache, grad_out: &[f64], grads: &mut Cpm) {
        let mut g = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let (x, len) = &cache.inputs[i];
            let gx = self.layers[i].backward(x, *len, &g, &mut grads.layers[i], i > 0);
            if let Some(mut gx) = gx {
                relu_backward_inplace(x, &mut gx);
                g = gx;
            }
        }
    }
}

impl Module for Cpm {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("conv{i}"), l.named_tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vpm {
    pub stages: Vec<Conv3d>,
    pub input: InputSpec,
}

#[derive(Debug, Clone)]
pub struct VpmCache {
    convs: Vec<Conv3dCache>,
    /// Post-ReLU output of each stage.
    activations: Vec<Vec<f64>>,
    final_dims: [usize; 4],
}

impl ReluPattern for VpmCache {
    fn relu_pattern(&self, out: &mut Vec<bool>) {
        self.activations.iter().for_each(|x| push_active(x, out));
    }
}

impl Vpm {
    pub fn new<R: Rng + ?Sized>(config: &VpmConfig, input: InputSpec, rng: &mut R) -> Self {
        let mut in_channels = 3;
        let stages = config
            .stages
            .iter()
            .map(|s| {
                let conv = Conv3d::new(in_channels, s.out_channels, s.geometry, rng);
                in_channels = s.out_channels;
                conv
            })
            .collect();
        Vpm { stages, input }
    }

    pub fn clip_input(&self, clip: &VideoClip) -> Result<Vec<f64>> {
        let want = [3, self.input.n_frames, self.input.frame_height, self.input.frame_width];
        if clip.shape() != want || clip.frames.len() != want.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "VPM expects a clip of shape {want:?}, got {:?}",
                clip.shape()
            )));
        }
        Ok(clip.frames.iter().map(|&v| v as f64).collect())
    }

    /// Returns `r_v` temporal-major `(T_v, C_v)` plus `(T_v, C_v)`.
    pub fn forward(&self, clip: &VideoClip) -> Result<(Vec<f64>, (usize, usize), VpmCache)> {
        let x0 = self.clip_input(clip)?;
        let mut dims = [3, self.input.n_frames, self.input.frame_height, self.input.frame_width];
        let mut convs = Vec::with_capacity(self.stages.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let (mut y, cache) = stage.forward(activations.last().unwrap_or(&x0), dims)?;
            relu_inplace(&mut y);
            dims = stage.output_dims(dims)?;
            convs.push(cache);
            activations.push(y);
        }
        let pooled = global_average_pool(activations.last().unwrap_or(&x0), dims);
        Ok((
            pooled,
            (dims[1], dims[0]),
            VpmCache {
                convs,
                activations,
                final_dims: dims,
            },
        ))
    }

    pub fn backward(&self, cache: &VpmCache, grad_r_v: &[f64], grads: &mut Vpm) {
        let [c, t, h, w] = cache.final_dims;
        let area = (h * w) as f64;
        let mut g = vec![0.0; c * t * h * w];
        for ch in 0..c {
            for tt in 0..t {
                let v = grad_r_v[tt * c + ch] / area;
                let base = (ch * t + tt) * h * w;
                g[base..base + h * w].fill(v);
            }
        }
        for i in (0..self.stages.len()).rev() {
            relu_backward_inplace(&cache.activations[i], &mut g);
            match self.stages[i].backward(&cache.convs[i], &g, &mut grads.stages[i], i > 0) {
                Some(gx) => g = gx,
                None => break,
            }
        }
    }
}

/// Mean over `(H, W)` of a `(C, T, H, W)` map, emitted as `(T, C)`.
pub fn global_average_pool(x: &[f64], dims: [usize; 4]) -> Vec<f64> {
    let [c, t, h, w] = dims;
    let area = h * w;
    let mut out = vec![0.0; t * c];
    for ch in 0..c {
        for tt in 0..t {
            let base = (ch * t + tt) * area;
            out[tt * c + ch] = x[base..base + area].iter().sum::<f64>() / area as f64;
        }
    }
    out
}

impl Module for Vpm {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.stages
            .iter()
            .enumerate()
            .flat_map(|(i, s)| prefixed(&format!("stage{i}"), s.named_tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.stages.iter_mut().flat_map(|s| s.tensors_mut()).collect()
    }
}

/// The CPM and (optionally) VPM feeding one fusion module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoders {
    pub cpm: Cpm,
    pub vpm: Option<Vpm>,
}

#[derive(Debug, Clone)]
pub struct EncodersCache {
    cpm: CpmCache,
    vpm: Option<VpmCache>,
}

impl ReluPattern for EncodersCache {
    fn relu_pattern(&self, out: &mut Vec<bool>) {
        self.cpm.relu_pattern(out);
        if let Some(v) = &self.vpm {
            v.relu_pattern(out);
        }
    }
}

impl Encoders {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let cpm = Cpm::new(&config.cpm, config.input.k_in, rng);
        let vpm = config
            .use_vision
            .then(|| Vpm::new(&config.vpm, config.input, rng));
        Encoders { cpm, vpm }
    }

    pub fn encode(&self, sample: &Sample) -> Result<(Representation, EncodersCache)> {
        let (r_c, cpm) = self.cpm.forward(&sample.can)?;
        let (r_v, (t_v, c_v), vpm) = match &self.vpm {
            Some(v) => {
                let (r_v, dims, cache) = v.forward(&sample.clip)?;
                (r_v, dims, Some(cache))
            }
            None => (Vec::new(), (0, 0), None),
        };
        Ok((Representation { r_c, r_v, t_v, c_v }, EncodersCache { cpm, vpm }))
    }

    pub fn backward(&self, cache: &EncodersCache, grad_r_c: &[f64], grad_r_v: &[f64], grads: &mut Encoders) {
        self.cpm.backward(&cache.cpm, grad_r_c, &mut grads.cpm);
        if let (Some(vpm), Some(vc), Some(gv)) = (&self.vpm, &cache.vpm, grads.vpm.as_mut()) {
            vpm.backward(vc, grad_r_v, gv);
        }
    }
}

impl Module for Encoders {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("cpm", self.cpm.named_tensors());
        if let Some(v) = &self.vpm {
            out.extend(prefixed("vpm", v.named_tensors()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.cpm.tensors_mut();
        if let Some(v) = self.vpm.as_mut() {
            out.extend(v.tensors_mut());
        }
        out
    }
}
