//! 3D convolution over `(channels, time, height, width)` volumes.
//!
//! The production path lowers the convolution to a matrix product
//! (`im2col` + GEMM). [`conv3d_reference`] evaluates the convolution sum
//! directly and exists to check the production path.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::layers::Module;
use crate::tensor::{gemm, Tensor};

/// Per-axis kernel size, stride and zero padding, ordered `(t, h, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv3dGeometry {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Conv3dGeometry {
    pub fn cube(kernel: usize, stride: usize, padding: usize) -> Self {
        Conv3dGeometry {
            kernel: [kernel; 3],
            stride: [stride; 3],
            padding: [padding; 3],
        }
    }

    /// Output `(t, h, w)` for an input `(t, h, w)`, or `None` when the
    /// kernel does not fit.
    pub fn output_dims(&self, input: [usize; 3]) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if padded < self.kernel[a] || self.stride[a] == 0 {
                return None;
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv3d {
    /// `(out_channels, in_channels, kt, kh, kw)`
    pub weight: Tensor,
    pub bias: Tensor,
    pub geometry: Conv3dGeometry,
}

/// Lowered input kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Conv3dCache {
    cols: Vec<f64>,
    input_dims: [usize; 4],
    output_dims: [usize; 4],
}

impl Conv3d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        geometry: Conv3dGeometry,
        rng: &mut R,
    ) -> Self {
        let [kt, kh, kw] = geometry.kernel;
        let bound = 1.0 / ((in_channels * kt * kh * kw) as f64).sqrt();
        Conv3d {
            weight: Tensor::uniform(&[out_channels, in_channels, kt, kh, kw], bound, rng),
            bias: Tensor::uniform(&[out_channels], bound, rng),
            geometry,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    fn patch_len(&self) -> usize {
        let [kt, kh, kw] = self.geometry.kernel;
        self.in_channels() * kt * kh * kw
    }

    pub fn output_dims(&self, input_dims: [usize; 4]) -> Result<[usize; 4]> {
        if input_dims[0] != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv3d expects {} input channels, got {}",
                self.in_channels(),
                input_dims[0]
            )));
        }
        let [t, h, w] = self
            .geometry
            .output_dims([input_dims[1], input_dims[2], input_dims[3]])
            .ok_or_else(|| {
                Error::Shape(format!(
                    "conv3d kernel {:?} does not fit input {:?}",
                    self.geometry.kernel, input_dims
                ))
            })?;
        Ok([self.out_channels(), t, h, w])
    }

    /// Forward pass. `input` is `(C, T, H, W)` row-major.
    pub fn forward(&self, input: &[f64], input_dims: [usize; 4]) -> Result<(Vec<f64>, Conv3dCache)> {
        let output_dims = self.output_dims(input_dims)?;
        if input.len() != input_dims.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "conv3d input buffer of {} values does not match {:?}",
                input.len(),
                input_dims
            )));
        }
        let positions: usize = output_dims[1..].iter().product();
        let k = self.patch_len();
        let cols = im2col(input, input_dims, output_dims, &self.geometry);

        let cout = self.out_channels();
        let mut out = vec![0.0; cout * positions];
        for (co, row) in out.chunks_mut(positions).enumerate() {
            row.fill(self.bias.data[co]);
        }
        gemm(cout, k, positions, 1.0, &self.weight.data, false, &cols, false, 1.0, &mut out);
        Ok((
            out,
            Conv3dCache {
                cols,
                input_dims,
                output_dims,
            },
        ))
    }

    /// Accumulates parameter gradients from `grad_out` (shaped like the
    /// forward output) and optionally returns the input gradient.
    pub fn backward(
        &self,
        cache: &Conv3dCache,
        grad_out: &[f64],
        grads: &mut Conv3d,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let cout = self.out_channels();
        let positions: usize = cache.output_dims[1..].iter().product();
        let k = self.patch_len();

        gemm(cout, positions, k, 1.0, grad_out, false, &cache.cols, true, 1.0, &mut grads.weight.data);
        for (co, row) in grad_out.chunks(positions).enumerate() {
            grads.bias.data[co] += row.iter().sum::<f64>();
        }
        if !want_input_grad {
            return None;
        }
        let mut grad_cols = vec![0.0; k * positions];
        gemm(k, cout, positions, 1.0, &self.weight.data, true, grad_out, false, 0.0, &mut grad_cols);
        Some(col2im(&grad_cols, cache.input_dims, cache.output_dims, &self.geometry))
    }
}

impl Module for Conv3d {
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

/// Visits every (patch row, output column, input index) triple that lies
/// inside the unpadded input.
fn for_each_tap(
    input_dims: [usize; 4],
    output_dims: [usize; 4],
    geometry: &Conv3dGeometry,
    mut f: impl FnMut(usize, usize, usize),
) {
    let [cin, t_in, h_in, w_in] = input_dims;
    let [_, t_out, h_out, w_out] = output_dims;
    let [kt, kh, kw] = geometry.kernel;
    let [st, sh, sw] = geometry.stride;
    let [pt, ph, pw] = geometry.padding;
    let positions = t_out * h_out * w_out;
    let mut row = 0;
    for c in 0..cin {
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    for ot in 0..t_out {
                        let it = (ot * st + dt) as isize - pt as isize;
                        if it < 0 || it as usize >= t_in {
                            continue;
                        }
                        for oh in 0..h_out {
                            let ih = (oh * sh + dh) as isize - ph as isize;
                            if ih < 0 || ih as usize >= h_in {
                                continue;
                            }
                            let base_in = ((c * t_in + it as usize) * h_in + ih as usize) * w_in;
                            let base_col = row * positions + (ot * h_out + oh) * w_out;
                            for ow in 0..w_out {
                                let iw = (ow * sw + dw) as isize - pw as isize;
                                if iw < 0 || iw as usize >= w_in {
                                    continue;
                                }
                                f(row, base_col + ow, base_in + iw as usize);
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn im2col(
    input: &[f64],
    input_dims: [usize; 4],
    output_dims: [usize; 4],
    geometry: &Conv3dGeometry,
) -> Vec<f64> {
    let [cin, t_in, h_in, w_in] = input_dims;
    let [_, t_out, h_out, w_out] = output_dims;
    let [kt, kh, kw] = geometry.kernel;
    let [st, sh, sw] = geometry.stride;
    let [pt, ph, pw] = geometry.padding;
    let positions = t_out * h_out * w_out;
    let mut cols = vec![0.0; cin * kt * kh * kw * positions];
    // Same taps as `for_each_tap`, ordered so each input row is read once
    // per (dt, dh) while it sits in cache.
    for c in 0..cin {
        for dt in 0..kt {
            for ot in 0..t_out {
                let Some(it) = (ot * st + dt).checked_sub(pt).filter(|&i| i < t_in) else {
                    continue;
                };
                for dh in 0..kh {
                    for oh in 0..h_out {
                        let Some(ih) = (oh * sh + dh).checked_sub(ph).filter(|&i| i < h_in) else {
                            continue;
                        };
                        let src = &input[((c * t_in + it) * h_in + ih) * w_in..][..w_in];
                        for dw in 0..kw {
                            let row = ((c * kt + dt) * kh + dh) * kw + dw;
                            let dst = &mut cols[row * positions + (ot * h_out + oh) * w_out..][..w_out];
                            for (ow, d) in dst.iter_mut().enumerate() {
                                if let Some(&v) = (ow * sw + dw).checked_sub(pw).and_then(|iw| src.get(iw)) {
                                    *d = v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    cols: &[f64],
    input_dims: [usize; 4],
    output_dims: [usize; 4],
    geometry: &Conv3dGeometry,
) -> Vec<f64> {
    let mut input = vec![0.0; input_dims.iter().product()];
    for_each_tap(input_dims, output_dims, geometry, |_, col, dst| {
        input[dst] += cols[col];
    });
    input
}

/// Direct evaluation of
/// `out[j][x][y][z] = bias[j] + Σ_m Σ_p Σ_q Σ_r w[j][m][p][q][r] · in[m][x·s+p][y·s+q][z·s+r]`
/// with zero padding, over a single `(C, T, H, W)` input and a
/// `(C_out, C_in, kt, kh, kw)` kernel.
pub fn conv3d_reference(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&[f64]>,
    stride: [usize; 3],
    padding: [usize; 3],
) -> Result<Tensor> {
    if input.shape.len() != 4 || kernel.shape.len() != 5 {
        return Err(Error::Shape(format!(
            "reference conv3d needs a 4D input and 5D kernel, got {:?} and {:?}",
            input.shape, kernel.shape
        )));
    }
    let (cin, t_in, h_in, w_in) = (input.shape[0], input.shape[1], input.shape[2], input.shape[3]);
    let (cout, kcin, kt, kh, kw) = (
        kernel.shape[0],
        kernel.shape[1],
        kernel.shape[2],
        kernel.shape[3],
        kernel.shape[4],
    );
    if kcin != cin {
        return Err(Error::Shape(format!(
            "kernel expects {kcin} input channels, input has {cin}"
        )));
    }
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(Error::Shape(format!("bias length {} != {cout}", b.len())));
        }
    }
    let geometry = Conv3dGeometry {
        kernel: [kt, kh, kw],
        stride,
        padding,
    };
    let [t_out, h_out, w_out] = geometry
        .output_dims([t_in, h_in, w_in])
        .ok_or_else(|| Error::Shape("kernel larger than padded input".to_string()))?;

    let at = |m: usize, t: isize, h: isize, w: isize| -> f64 {
        if t < 0 || h < 0 || w < 0 || t as usize >= t_in || h as usize >= h_in || w as usize >= w_in {
            0.0
        } else {
            input.data[((m * t_in + t as usize) * h_in + h as usize) * w_in + w as usize]
        }
    };

    let mut out = Tensor::zeros(&[cout, t_out, h_out, w_out]);
    for j in 0..cout {
        for x in 0..t_out {
            for y in 0..h_out {
                for z in 0..w_out {
                    let mut acc = bias.map_or(0.0, |b| b[j]);
                    for m in 0..cin {
                        for p in 0..kt {
                            for q in 0..kh {
                                for r in 0..kw {
                                    let w = kernel.data[(((j * cin + m) * kt + p) * kh + q) * kw + r];
                                    let t = (x * stride[0] + p) as isize - padding[0] as isize;
                                    let h = (y * stride[1] + q) as isize - padding[1] as isize;
                                    let ww = (z * stride[2] + r) as isize - padding[2] as isize;
                                    acc += w * at(m, t, h, ww);
                                }
                            }
                        }
                    }
                    out.data[((j * t_out + x) * h_out + y) * w_out + z] = acc;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_kernel_scales_input() {
        let input = Tensor::from_vec(&[1, 2, 2, 2], (0..8).map(|v| v as f64).collect());
        let kernel = Tensor::from_vec(&[1, 1, 1, 1, 1], vec![2.0]);
        let out = conv3d_reference(&input, &kernel, None, [1; 3], [0; 3]).unwrap();
        assert_eq!(out.shape, input.shape);
        for (o, i) in out.data.iter().zip(&input.data) {
            assert_eq!(*o, 2.0 * i);
        }
    }

    #[test]
    fn centered_delta_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let input = Tensor::uniform(&[2, 3, 4, 5], 1.0, &mut rng);
        let mut kernel = Tensor::zeros(&[2, 2, 3, 3, 3]);
        for c in 0..2 {
            kernel.data[(((c * 2 + c) * 3 + 1) * 3 + 1) * 3 + 1] = 1.0;
        }
        let out = conv3d_reference(&input, &kernel, None, [1; 3], [1; 3]).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn reference_rejects_channel_mismatch() {
        let input = Tensor::zeros(&[2, 3, 3, 3]);
        let kernel = Tensor::zeros(&[1, 3, 1, 1, 1]);
        assert!(conv3d_reference(&input, &kernel, None, [1; 3], [0; 3]).is_err());
    }

    #[test]
    fn production_matches_reference_on_documented_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let geometry = Conv3dGeometry::cube(3, 1, 1);
        let conv = Conv3d::new(2, 3, geometry, &mut rng);
        let input = Tensor::uniform(&[2, 4, 6, 6], 1.0, &mut rng);
        let (out, _) = conv.forward(&input.data, [2, 4, 6, 6]).unwrap();
        let want = conv3d_reference(&input, &conv.weight, Some(&conv.bias.data), [1; 3], [1; 3]).unwrap();
        assert_eq!(want.shape, vec![3, 4, 6, 6]);
        for (a, b) in out.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let geometry = Conv3dGeometry {
            kernel: [3, 2, 3],
            stride: [2, 1, 2],
            padding: [1, 0, 1],
        };
        let mut conv = Conv3d::new(2, 2, geometry, &mut rng);
        let dims = [2, 4, 3, 5];
        let input = Tensor::uniform(&dims, 1.0, &mut rng);
        let loss = |c: &Conv3d, x: &[f64]| -> f64 {
            let (y, _) = c.forward(x, dims).unwrap();
            y.iter().map(|v| v * v).sum()
        };
        let (y, cache) = conv.forward(&input.data, dims).unwrap();
        let gy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let mut grads = conv.clone();
        grads.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        let gx = conv.backward(&cache, &gy, &mut grads, true).unwrap();

        let h = 1e-6;
        for i in 0..conv.weight.len() {
            let orig = conv.weight.data[i];
            conv.weight.data[i] = orig + h;
            let up = loss(&conv, &input.data);
            conv.weight.data[i] = orig - h;
            let down = loss(&conv, &input.data);
            conv.weight.data[i] = orig;
            let num = (up - down) / (2.0 * h);
            assert!((num - grads.weight.data[i]).abs() < 1e-5, "w{i}: {num} vs {}", grads.weight.data[i]);
        }
        for i in 0..input.len() {
            let mut xp = input.data.clone();
            xp[i] += h;
            let mut xm = input.data.clone();
            xm[i] -= h;
            let num = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * h);
            assert!((num - gx[i]).abs() < 1e-5, "x{i}: {num} vs {}", gx[i]);
        }
    }
}
