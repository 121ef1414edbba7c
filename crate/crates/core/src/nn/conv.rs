use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{normal, Param, Parameterized};

/// Valid convolution over time: a `width x in_dim` kernel per filter
/// slides along the rows of an `L x in_dim` input, followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeConv {
    /// `filters x (width * in_dim)`, row-major over (offset, channel).
    pub w: Param,
    pub b: Param,
    pub width: usize,
    pub in_dim: usize,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    patches: Array2<f64>,
    /// Post-ReLU activations, `(L - width + 1) x filters`.
    pub out: Array2<f64>,
}

impl TimeConv {
    pub fn new<R: Rng>(rng: &mut R, width: usize, in_dim: usize, filters: usize, init_std: f64) -> Self {
        TimeConv {
            w: Param::new(normal(rng, filters, width * in_dim, init_std)),
            b: Param::zeros(1, filters),
            width,
            in_dim,
        }
    }

    pub fn filters(&self) -> usize {
        self.w.value.nrows()
    }

    pub fn positions(&self, len: usize) -> usize {
        (len + 1).saturating_sub(self.width)
    }

    /// `x` must have at least `width` rows.
    pub fn forward(&self, x: ArrayView2<f64>) -> ConvCache {
        let positions = self.positions(x.nrows());
        let mut patches = Array2::zeros((positions, self.width * self.in_dim));
        for t in 0..positions {
            let window = x.slice(s![t..t + self.width, ..]);
            for (dst, src) in patches.row_mut(t).iter_mut().zip(window.iter()) {
                *dst = *src;
            }
        }
        let mut out = patches.dot(&self.w.value.t()) + &self.b.row();
        out.mapv_inplace(super::relu);
        ConvCache { patches, out }
    }

    /// Takes the gradient w.r.t. the post-ReLU output; returns `dL/dx`.
    pub fn backward(&mut self, cache: &ConvCache, d_out: ArrayView2<f64>, input_len: usize) -> Array2<f64> {
        let mut d_pre = d_out.to_owned();
        ndarray::Zip::from(&mut d_pre).and(&cache.out).for_each(|g, &y| {
            if y <= 0.0 {
                *g = 0.0;
            }
        });
        self.w.grad += &d_pre.t().dot(&cache.patches);
        self.b.grad.row_mut(0).scaled_add(1.0, &d_pre.sum_axis(Axis(0)));
        let d_patches = d_pre.dot(&self.w.value);
        let mut dx = Array2::zeros((input_len, self.in_dim));
        for (t, row) in d_patches.rows().into_iter().enumerate() {
            let mut window = dx.slice_mut(s![t..t + self.width, ..]);
            for (dst, src) in window.iter_mut().zip(row.iter()) {
                *dst += *src;
            }
        }
        dx
    }
}

impl Parameterized for TimeConv {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}
