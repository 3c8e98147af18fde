//! Dense row-major tensors and the few linear-algebra kernels the models need.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data does not match shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let len = shape.iter().product();
        let dist = Uniform::new_inclusive(-bound, bound);
        let data = (0..len).map(|_| dist.sample(rng)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` where `a` is `m x k`, `b` is `k x n`
/// after the optional transposes. All buffers are row-major and contiguous.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    assert!(a.len() >= m * k);
    assert!(b.len() >= k * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every index reachable through the
    // given strides lies inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y += W x` for a row-major `rows x cols` matrix.
pub fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(y.len(), rows);
    for (r, out) in y.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *out += dot(row, x);
    }
}

/// `x_grad += W^T g`.
pub fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, g: &[f64], x_grad: &mut [f64]) {
    debug_assert_eq!(g.len(), rows);
    debug_assert_eq!(x_grad.len(), cols);
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (xg, &wv) in x_grad.iter_mut().zip(row) {
            *xg += gr * wv;
        }
    }
}

/// `W_grad += g x^T`.
pub fn outer_acc(g: &[f64], x: &[f64], w_grad: &mut [f64]) {
    let cols = x.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &mut w_grad[r * cols..(r + 1) * cols];
        for (wg, &xv) in row.iter_mut().zip(x) {
            *wg += gr * xv;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    c[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; a.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = a[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let want = naive(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        gemm(m, k, n, 1.0, &a, false, &b, false, 0.0, &mut c);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, 1.0, &at, true, &bt, true, 0.0, &mut c);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matvec_helpers_agree_with_gemm() {
        let w: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let x = [1.0, -1.0, 2.0];
        let mut y = vec![0.0; 2];
        matvec_acc(&w, 2, 3, &x, &mut y);
        assert_eq!(y, vec![0.0 - 1.0 + 4.0, 3.0 - 4.0 + 10.0]);

        let mut xg = vec![0.0; 3];
        matvec_t_acc(&w, 2, 3, &[1.0, 1.0], &mut xg);
        assert_eq!(xg, vec![3.0, 5.0, 7.0]);

        let mut wg = vec![0.0; 6];
        outer_acc(&[1.0, 2.0], &x, &mut wg);
        assert_eq!(wg, vec![1.0, -1.0, 2.0, 2.0, -2.0, 4.0]);
    }
}
