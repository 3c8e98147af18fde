//! Dense, 1D-convolution and LSTM layers with explicit backward passes.
//!
//! Every layer works on a single example. Backward methods accumulate
//! parameter gradients into a zeroed copy of the layer (same type, same
//! shapes), which keeps the optimizer and gradient checks generic over
//! [`Module`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{matvec_acc, matvec_t_acc, outer_acc, Tensor};

/// Ordered access to the trainable tensors of a component.
///
/// `named_tensors` and `tensors_mut` must enumerate in the same order.
pub trait Module {
    fn named_tensors(&self) -> Vec<(String, &Tensor)>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Which ReLU units were active (`> 0`) during a cached forward pass.
pub trait ReluPattern {
    fn relu_pattern(&self, out: &mut Vec<bool>);
}

pub(crate) fn push_active(values: &[f64], out: &mut Vec<bool>) {
    out.extend(values.iter().map(|&v| v > 0.0));
}

pub(crate) fn prefixed<'a>(
    prefix: &str,
    inner: Vec<(String, &'a Tensor)>,
) -> Vec<(String, &'a Tensor)> {
    inner
        .into_iter()
        .map(|(name, t)| (format!("{prefix}.{name}"), t))
        .collect()
}

pub fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
}

/// Zeroes `grad` wherever the forward activation was clamped.
pub fn relu_backward_inplace(activated: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// Fully-connected layer `y = W x + b`, `W` stored `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = fan_in_bound(inputs);
        Dense {
            weight: Tensor::uniform(&[outputs, inputs], bound, rng),
            bias: Tensor::uniform(&[outputs], bound, rng),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.data.clone();
        matvec_acc(&self.weight.data, self.outputs(), self.inputs(), x, &mut y);
        y
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. `x`.
    pub fn backward(&self, x: &[f64], grad_y: &[f64], grads: &mut Dense) -> Vec<f64> {
        outer_acc(grad_y, x, &mut grads.weight.data);
        for (b, g) in grads.bias.data.iter_mut().zip(grad_y) {
            *b += g;
        }
        let mut grad_x = vec![0.0; self.inputs()];
        matvec_t_acc(
            &self.weight.data,
            self.outputs(),
            self.inputs(),
            grad_y,
            &mut grad_x,
        );
        grad_x
    }

    /// Like [`Dense::backward`] but skips the input gradient.
    pub fn backward_params(&self, x: &[f64], grad_y: &[f64], grads: &mut Dense) {
        outer_acc(grad_y, x, &mut grads.weight.data);
        for (b, g) in grads.bias.data.iter_mut().zip(grad_y) {
            *b += g;
        }
    }
}

impl Module for Dense {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("weight".to_string(), &self.weight),
            ("bias".to_string(), &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Stack of dense layers with ReLU between consecutive layers and a linear
/// output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer inputs recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
}

impl ReluPattern for MlpCache {
    fn relu_pattern(&self, out: &mut Vec<bool>) {
        self.inputs.iter().skip(1).for_each(|x| push_active(x, out));
    }
}

impl Mlp {
    /// `widths` lists every layer width including input and output.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| Dense::new(w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(Dense::outputs));
        w
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h);
            if i < last {
                relu_inplace(&mut y);
            }
            inputs.push(std::mem::replace(&mut h, y));
        }
        (h, MlpCache { inputs })
    }

    /// Returns the gradient w.r.t. the MLP input when `want_input_grad`.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &[f64],
        grads: &mut Mlp,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let mut g = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            if i == 0 && !want_input_grad {
                self.layers[0].backward_params(x, &g, &mut grads.layers[0]);
                return None;
            }
            let mut gx = self.layers[i].backward(x, &g, &mut grads.layers[i]);
            if i > 0 {
                // x is the ReLU output of layer i-1.
                relu_backward_inplace(x, &mut gx);
            }
            g = gx;
        }
        Some(g)
    }
}

impl Module for Mlp {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("fc{i}"), l.named_tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

/// 1D convolution over `(channels, length)` inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    /// `(out_channels, in_channels, kernel)`
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - kernel) / stride + 1
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let bound = fan_in_bound(in_channels * kernel);
        Conv1d {
            weight: Tensor::uniform(&[out_channels, in_channels, kernel], bound, rng),
            bias: Tensor::uniform(&[out_channels], bound, rng),
            stride,
            padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn out_len(&self, len: usize) -> usize {
        conv_out_len(len, self.kernel(), self.stride, self.padding)
    }

    /// Input position feeding output `o` through tap `k`, if inside the signal.
    fn source(&self, o: usize, k: usize, len: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < len).then_some(pos as usize)
    }

    pub fn forward(&self, x: &[f64], len: usize) -> Vec<f64> {
        let (cin, cout, k) = (self.in_channels(), self.out_channels(), self.kernel());
        let out_len = self.out_len(len);
        let mut y = vec![0.0; cout * out_len];
        for co in 0..cout {
            for o in 0..out_len {
                let mut acc = self.bias.data[co];
                for ci in 0..cin {
                    for kk in 0..k {
                        if let Some(p) = self.source(o, kk, len) {
                            acc += self.weight.data[(co * cin + ci) * k + kk] * x[ci * len + p];
                        }
                    }
                }
                y[co * out_len + o] = acc;
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        len: usize,
        grad_y: &[f64],
        grads: &mut Conv1d,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let (cin, cout, k) = (self.in_channels(), self.out_channels(), self.kernel());
        let out_len = self.out_len(len);
        let mut grad_x = want_input_grad.then(|| vec![0.0; cin * len]);
        for co in 0..cout {
            for o in 0..out_len {
                let g = grad_y[co * out_len + o];
                if g == 0.0 {
                    continue;
                }
                grads.bias.data[co] += g;
                for ci in 0..cin {
                    for kk in 0..k {
                        if let Some(p) = self.source(o, kk, len) {
                            let w = (co * cin + ci) * k + kk;
                            grads.weight.data[w] += g * x[ci * len + p];
                            if let Some(gx) = grad_x.as_mut() {
                                gx[ci * len + p] += g * self.weight.data[w];
                            }
                        }
                    }
                }
            }
        }
        grad_x
    }
}

impl Module for Conv1d {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("weight".to_string(), &self.weight),
            ("bias".to_string(), &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Unidirectional LSTM with zero initial state. Gate order: input, forget,
/// cell candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    /// `(4H, input)`
    pub w_ih: Tensor,
    /// `(4H, H)`
    pub w_hh: Tensor,
    /// `(4H)`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    inputs: Vec<Vec<f64>>,
    /// Activated gates per step, `4H` each.
    gates: Vec<Vec<f64>>,
    /// Cell state per step (after update).
    cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = fan_in_bound(hidden);
        Lstm {
            w_ih: Tensor::uniform(&[4 * hidden, inputs], bound, rng),
            w_hh: Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            bias: Tensor::uniform(&[4 * hidden], bound, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape[1]
    }

    pub fn inputs(&self) -> usize {
        self.w_ih.shape[1]
    }

    pub fn forward(&self, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, LstmCache) {
        let h_dim = self.hidden();
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        let mut cache = LstmCache {
            inputs: xs.to_vec(),
            gates: Vec::with_capacity(xs.len()),
            cells: Vec::with_capacity(xs.len()),
            hiddens: Vec::with_capacity(xs.len()),
        };
        for x in xs {
            let mut z = self.bias.data.clone();
            matvec_acc(&self.w_ih.data, 4 * h_dim, self.inputs(), x, &mut z);
            matvec_acc(&self.w_hh.data, 4 * h_dim, h_dim, &h, &mut z);
            for j in 0..h_dim {
                z[j] = sigmoid(z[j]);
                z[h_dim + j] = sigmoid(z[h_dim + j]);
                z[2 * h_dim + j] = z[2 * h_dim + j].tanh();
                z[3 * h_dim + j] = sigmoid(z[3 * h_dim + j]);
            }
            for j in 0..h_dim {
                c[j] = z[h_dim + j] * c[j] + z[j] * z[2 * h_dim + j];
                h[j] = z[3 * h_dim + j] * c[j].tanh();
            }
            cache.gates.push(z);
            cache.cells.push(c.clone());
            cache.hiddens.push(h.clone());
        }
        (cache.hiddens.clone(), cache)
    }

    /// Backpropagation through time. `grad_h[t]` is the loss gradient w.r.t.
    /// the emitted hidden state at step `t`.
    pub fn backward(
        &self,
        cache: &LstmCache,
        grad_h: &[Vec<f64>],
        grads: &mut Lstm,
        want_input_grad: bool,
    ) -> Option<Vec<Vec<f64>>> {
        let h_dim = self.hidden();
        let steps = cache.inputs.len();
        let zeros = vec![0.0; h_dim];
        let mut dh_next = vec![0.0; h_dim];
        let mut dc_next = vec![0.0; h_dim];
        let mut grad_x = want_input_grad.then(|| vec![Vec::new(); steps]);
        let mut dz = vec![0.0; 4 * h_dim];

        for t in (0..steps).rev() {
            let z = &cache.gates[t];
            let c = &cache.cells[t];
            let c_prev = if t > 0 { &cache.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &cache.hiddens[t - 1] } else { &zeros };
            for j in 0..h_dim {
                let (i, f, g, o) = (z[j], z[h_dim + j], z[2 * h_dim + j], z[3 * h_dim + j]);
                let dh = grad_h[t][j] + dh_next[j];
                let tc = c[j].tanh();
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * g * i * (1.0 - i);
                dz[h_dim + j] = dc * c_prev[j] * f * (1.0 - f);
                dz[2 * h_dim + j] = dc * i * (1.0 - g * g);
                dz[3 * h_dim + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            outer_acc(&dz, &cache.inputs[t], &mut grads.w_ih.data);
            outer_acc(&dz, h_prev, &mut grads.w_hh.data);
            for (b, g) in grads.bias.data.iter_mut().zip(&dz) {
                *b += g;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(&self.w_hh.data, 4 * h_dim, h_dim, &dz, &mut dh_next);
            if let Some(gx) = grad_x.as_mut() {
                let mut gxt = vec![0.0; self.inputs()];
                matvec_t_acc(&self.w_ih.data, 4 * h_dim, self.inputs(), &dz, &mut gxt);
                gx[t] = gxt;
            }
        }
        grad_x
    }
}

impl Module for Lstm {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_ih".to_string(), &self.w_ih),
            ("w_hh".to_string(), &self.w_hh),
            ("bias".to_string(), &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed<M: Module + Clone>(m: &M) -> M {
        let mut z = m.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    /// Central-difference check of every parameter of a small module.
    fn check<M, F>(module: &mut M, analytic: &M, loss: F)
    where
        M: Module,
        F: Fn(&M) -> f64,
    {
        let grads: Vec<f64> = analytic
            .named_tensors()
            .iter()
            .flat_map(|(_, t)| t.data.clone())
            .collect();
        let h = 1e-5;
        let mut idx = 0;
        let n_tensors = module.tensors_mut().len();
        for ti in 0..n_tensors {
            let len = module.tensors_mut()[ti].len();
            for k in 0..len {
                let orig = module.tensors_mut()[ti].data[k];
                module.tensors_mut()[ti].data[k] = orig + h;
                let up = loss(module);
                module.tensors_mut()[ti].data[k] = orig - h;
                let down = loss(module);
                module.tensors_mut()[ti].data[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = grads[idx];
                assert!(
                    (a - numeric).abs() <= 1e-6 * (1.0 + a.abs().max(numeric.abs())),
                    "param {idx}: analytic {a} numeric {numeric}"
                );
                idx += 1;
            }
        }
    }

    #[test]
    fn conv1d_output_lengths_follow_stride_two_pad_one() {
        assert_eq!(conv_out_len(10, 3, 2, 1), 5);
        assert_eq!(conv_out_len(5, 3, 2, 1), 3);
        assert_eq!(conv_out_len(3, 3, 2, 1), 2);
    }

    #[test]
    fn conv1d_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv1d::new(2, 3, 3, 2, 1, &mut rng);
        let x: Vec<f64> = (0..14).map(|i| (i as f64 * 0.7).sin()).collect();
        let loss = |c: &Conv1d| c.forward(&x, 7).iter().map(|v| v * v).sum::<f64>();
        let y = conv.forward(&x, 7);
        let gy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let mut g = zeroed(&conv);
        let gx = conv.backward(&x, 7, &gy, &mut g, true).unwrap();
        check(&mut conv, &g, loss);

        // input gradient
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let sq = |v: Vec<f64>| v.iter().map(|a| a * a).sum::<f64>();
            let num = (sq(conv.forward(&xp, 7)) - sq(conv.forward(&xm, 7))) / (2.0 * h);
            assert!((num - gx[i]).abs() < 1e-6, "{num} vs {}", gx[i]);
        }
    }

    #[test]
    fn mlp_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mlp = Mlp::new(&[4, 6, 3, 2], &mut rng);
        let x = [0.3, -0.2, 0.9, 0.1];
        let loss = |m: &Mlp| m.forward(&x).iter().map(|v| v * v).sum::<f64>();
        let (y, cache) = mlp.forward_cached(&x);
        let gy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let mut g = zeroed(&mlp);
        mlp.backward(&cache, &gy, &mut g, false);
        check(&mut mlp, &g, loss);
    }

    #[test]
    fn lstm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut lstm = Lstm::new(3, 4, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|t| (0..3).map(|i| ((t * 3 + i) as f64 * 0.37).cos()).collect())
            .collect();
        let loss = |l: &Lstm| {
            l.forward(&xs)
                .0
                .iter()
                .enumerate()
                .map(|(t, h)| h.iter().map(|v| (t + 1) as f64 * v * v).sum::<f64>())
                .sum::<f64>()
        };
        let (hs, cache) = lstm.forward(&xs);
        let gh: Vec<Vec<f64>> = hs
            .iter()
            .enumerate()
            .map(|(t, h)| h.iter().map(|v| 2.0 * (t + 1) as f64 * v).collect())
            .collect();
        let mut g = zeroed(&lstm);
        lstm.backward(&cache, &gh, &mut g, false);
        check(&mut lstm, &g, loss);
    }

    #[test]
    fn lstm_is_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lstm = Lstm::new(2, 3, &mut rng);
        let xs = vec![vec![0.1, 0.2], vec![0.3, -0.1], vec![0.5, 0.5]];
        let mut ys = xs.clone();
        ys[2] = vec![-4.0, 9.0];
        let (a, _) = lstm.forward(&xs);
        let (b, _) = lstm.forward(&ys);
        assert_eq!(a[..2], b[..2]);
        assert_ne!(a[2], b[2]);
    }

    #[test]
    fn zero_lstm_emits_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lstm = Lstm::new(2, 3, &mut rng);
        lstm.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        let (hs, _) = lstm.forward(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert!(hs.iter().flatten().all(|v| *v == 0.0));
    }
}
