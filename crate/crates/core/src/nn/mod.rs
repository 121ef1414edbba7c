//! Minimal float64 neural-network building blocks with hand-written
//! backward passes. Layers process one instance at a time and accumulate
//! gradients into their [`Param`]s.

mod attention;
mod conv;
mod dense;
mod lstm;

pub use attention::{Attention, AttentionCache};
pub use conv::{ConvCache, TimeConv};
pub use dense::Dense;
pub use lstm::{BiLstm, BiLstmCache, Lstm, LstmCache};

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// A trainable matrix with its accumulated gradient. Vectors are stored as
/// single-row matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param::new(Array2::zeros((rows, cols)))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// First row as a vector (for biases).
    pub fn row(&self) -> ArrayView1<'_, f64> {
        self.value.row(0)
    }
}

/// Anything owning parameters, visited in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Adaptive moment estimation.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Applies one update using `grad * grad_scale` for every parameter.
    pub fn step(&mut self, params: Vec<&mut Param>, grad_scale: f64) {
        if self.first.len() != params.len() {
            self.first = params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    let g = g * grad_scale;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

pub fn glorot_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

pub fn normal<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

/// Random `n x n` orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
pub fn orthogonal<R: Rng>(rng: &mut R, n: usize) -> Array2<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    Array2::from_shape_fn((n, n), |(i, j)| {
        let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        q[(i, j)] * s
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|z| (z - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Softmax restricted to `mask`; masked entries get probability zero.
pub fn masked_softmax(scores: ArrayView1<f64>, mask: &[bool]) -> Array1<f64> {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let exp = Array1::from_iter(scores.iter().zip(mask).map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 }));
    let sum = exp.sum();
    exp / sum
}

/// Central finite-difference checks for [`Parameterized`] models.
pub mod gradcheck {
    use super::{Param, Parameterized};

    /// Largest relative error between analytic gradients stored in
    /// `params` and central finite differences of `loss`.
    pub fn max_param_error<M: Parameterized>(model: &mut M, loss: impl Fn(&M) -> f64) -> f64 {
        let sizes: Vec<usize> = model.params_mut().iter().map(|p| p.len()).collect();
        let analytic: Vec<Vec<f64>> = model.params_mut().iter().map(|p| p.grad.iter().copied().collect()).collect();
        let h = STEP;
        let mut worst = 0.0f64;
        for (pi, &n) in sizes.iter().enumerate() {
            for k in 0..n {
                let orig = get(model.params_mut(), pi, k);
                set(model.params_mut(), pi, k, orig + h);
                let up = loss(model);
                set(model.params_mut(), pi, k, orig - h);
                let down = loss(model);
                set(model.params_mut(), pi, k, orig);
                let numeric = (up - down) / (2.0 * h);
                worst = worst.max(rel_err(analytic[pi][k], numeric));
            }
        }
        worst
    }

    /// Central-difference step, near the optimal `cbrt(eps)`. Smaller
    /// steps let roundoff (`eps * |L| / h`) swamp small gradients.
    pub const STEP: f64 = 1e-5;

    /// Below `FLOOR` the roundoff of a `STEP` difference (about 2e-11) is
    /// a sizable share of the gradient, so the absolute error is reported
    /// instead of the relative one.
    pub const FLOOR: f64 = 1e-6;

    pub fn rel_err(a: f64, b: f64) -> f64 {
        let scale = a.abs().max(b.abs());
        if scale < FLOOR {
            (a - b).abs()
        } else {
            (a - b).abs() / scale
        }
    }

    fn get(ps: Vec<&mut Param>, pi: usize, k: usize) -> f64 {
        *ps[pi].value.iter().nth(k).unwrap()
    }

    fn set(mut ps: Vec<&mut Param>, pi: usize, k: usize, v: f64) {
        *ps[pi].value.iter_mut().nth(k).unwrap() = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_is_normalized_and_shift_invariant() {
        let p = softmax(array![1.0, 2.0, 3.0].view());
        assert!((p.sum() - 1.0).abs() < 1e-12);
        let q = softmax(array![101.0, 102.0, 103.0].view());
        assert!((&p - &q).iter().all(|d| d.abs() < 1e-12));
        let m = masked_softmax(array![5.0, 1.0, 1.0].view(), &[false, true, true]);
        assert_eq!(m.to_vec(), vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn orthogonal_init() {
        let q = orthogonal(&mut crate::rng::seeded(1), 6);
        let eye = q.t().dot(&q);
        for i in 0..6 {
            for j in 0..6 {
                assert!((eye[[i, j]] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn adam_with_zero_rate_is_a_no_op() {
        let mut p = Param::new(array![[1.0, -2.0]]);
        p.grad = array![[0.5, 0.5]];
        let before = p.value.clone();
        let mut opt = Adam::new(0.0);
        for _ in 0..5 {
            opt.step(vec![&mut p], 1.0);
        }
        assert_eq!(p.value, before);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = Param::new(array![[1.0]]);
        p.grad = array![[2.0]];
        Adam::new(0.1).step(vec![&mut p], 1.0);
        assert!(p.value[[0, 0]] < 1.0);
    }
}
