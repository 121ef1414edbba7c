use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{glorot_uniform, softmax, Param, Parameterized};

/// Additive attention pooling: `score_t = v . tanh(W h_t + b)`,
/// `alpha = softmax(score)`, output `sum_t alpha_t h_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// `A x D`
    pub w: Param,
    pub b: Param,
    /// `1 x A`
    pub v: Param,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    hs: Array2<f64>,
    u: Array2<f64>,
    pub alpha: Array1<f64>,
    pub out: Array1<f64>,
}

impl Attention {
    pub fn new<R: Rng>(rng: &mut R, dim: usize, attn_dim: usize) -> Self {
        Attention {
            w: Param::new(glorot_uniform(rng, attn_dim, dim)),
            b: Param::zeros(1, attn_dim),
            v: Param::new(glorot_uniform(rng, 1, attn_dim)),
        }
    }

    pub fn forward(&self, hs: ArrayView2<f64>) -> AttentionCache {
        let u = (hs.dot(&self.w.value.t()) + &self.b.row()).mapv(f64::tanh);
        let scores = u.dot(&self.v.row());
        let alpha = softmax(scores.view());
        let out = hs.t().dot(&alpha);
        AttentionCache { hs: hs.to_owned(), u, alpha, out }
    }

    /// Returns `dL/dhs`.
    pub fn backward(&mut self, cache: &AttentionCache, d_out: ArrayView1<f64>) -> Array2<f64> {
        let alpha = &cache.alpha;
        let d_alpha = cache.hs.dot(&d_out);
        let mean = alpha.dot(&d_alpha);
        let d_scores = alpha * &(d_alpha - mean);
        self.v.grad.row_mut(0).scaled_add(1.0, &cache.u.t().dot(&d_scores));
        let d_u = d_scores.view().insert_axis(Axis(1)).dot(&self.v.value);
        let d_pre = d_u * &cache.u.mapv(|x| 1.0 - x * x);
        self.w.grad += &d_pre.t().dot(&cache.hs);
        self.b.grad.row_mut(0).scaled_add(1.0, &d_pre.sum_axis(Axis(0)));
        let direct = alpha.view().insert_axis(Axis(1)).dot(&d_out.insert_axis(Axis(0)));
        direct + d_pre.dot(&self.w.value)
    }
}

impl Parameterized for Attention {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b, &self.v]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b, &mut self.v]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_param_error, rel_err};
    use crate::nn::normal;
    use ndarray::array;

    #[test]
    fn weights_normalized_and_symmetric() {
        let mut rng = crate::rng::seeded(3);
        let att = Attention::new(&mut rng, 4, 5);
        let hs = normal(&mut rng, 7, 4, 1.0);
        assert!((att.forward(hs.view()).alpha.sum() - 1.0).abs() < 1e-12);

        let same = array![[0.3, -0.1, 0.2, 0.9], [0.3, -0.1, 0.2, 0.9]];
        let c = att.forward(same.view());
        assert!((c.alpha[0] - 0.5).abs() < 1e-12 && (c.alpha[1] - 0.5).abs() < 1e-12);

        let one = array![[1.0, 2.0, 3.0, 4.0]];
        let c = att.forward(one.view());
        assert_eq!(c.alpha.to_vec(), vec![1.0]);
        assert_eq!(c.out.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn gradient_check() {
        let mut rng = crate::rng::seeded(4);
        let mut att = Attention::new(&mut rng, 3, 4);
        att.b.value = normal(&mut rng, 1, 4, 0.3);
        let hs = normal(&mut rng, 5, 3, 1.0);
        let r = array![0.7, -1.3, 0.4];
        let loss = |a: &Attention| a.forward(hs.view()).out.dot(&r);
        let cache = att.forward(hs.view());
        let dh = att.backward(&cache, r.view());
        assert!(max_param_error(&mut att, loss) < 1e-4);
        for t in 0..5 {
            for c in 0..3 {
                let mut hp = hs.clone();
                hp[[t, c]] += 1e-6;
                let mut hm = hs.clone();
                hm[[t, c]] -= 1e-6;
                let num = (att.forward(hp.view()).out.dot(&r) - att.forward(hm.view()).out.dot(&r)) / 2e-6;
                assert!(rel_err(dh[[t, c]], num) < 1e-4);
            }
        }
    }
}
