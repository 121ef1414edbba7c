use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{glorot_uniform, orthogonal, sigmoid, Param, Parameterized};

/// Single-direction LSTM. Gate blocks are stacked in the order input,
/// forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `4H x in_dim`
    pub w: Param,
    /// `4H x H`
    pub u: Param,
    pub b: Param,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    xs: Array2<f64>,
    gates: Array2<f64>,
    cs: Array2<f64>,
    pub hs: Array2<f64>,
}

impl Lstm {
    pub fn new<R: Rng>(rng: &mut R, in_dim: usize, hidden: usize) -> Self {
        let w = glorot_uniform(rng, 4 * hidden, in_dim);
        let blocks: Vec<Array2<f64>> = (0..4).map(|_| orthogonal(rng, hidden)).collect();
        let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
        let u = concatenate(Axis(0), &views).expect("equal widths");
        let mut b = Array2::zeros((1, 4 * hidden));
        b.slice_mut(s![0, hidden..2 * hidden]).fill(1.0);
        Lstm { w: Param::new(w), u: Param::new(u), b: Param::new(b), hidden }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn forward(&self, xs: ArrayView2<f64>) -> LstmCache {
        let h = self.hidden;
        let steps = xs.nrows();
        let mut gates = xs.dot(&self.w.value.t()) + &self.b.row();
        let mut cs = Array2::<f64>::zeros((steps, h));
        let mut hs = Array2::<f64>::zeros((steps, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in 0..steps {
            let mut z = gates.row_mut(t);
            z += &self.u.value.dot(&h_prev);
            for k in 0..h {
                z[k] = sigmoid(z[k]);
                z[h + k] = sigmoid(z[h + k]);
                z[2 * h + k] = z[2 * h + k].tanh();
                z[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            for k in 0..h {
                let c = z[h + k] * c_prev[k] + z[k] * z[2 * h + k];
                cs[[t, k]] = c;
                hs[[t, k]] = z[3 * h + k] * c.tanh();
            }
            h_prev.assign(&hs.row(t));
            c_prev.assign(&cs.row(t));
        }
        LstmCache { xs: xs.to_owned(), gates, cs, hs }
    }

    /// Backpropagation through time; returns `dL/dxs`.
    pub fn backward(&mut self, cache: &LstmCache, d_hs: ArrayView2<f64>) -> Array2<f64> {
        let h = self.hidden;
        let steps = cache.hs.nrows();
        let mut dz = Array2::zeros((steps, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for t in (0..steps).rev() {
            let g = cache.gates.row(t);
            let mut row = dz.row_mut(t);
            for k in 0..h {
                let (i, f, cand, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let c = cache.cs[[t, k]];
                let c_prev = if t > 0 { cache.cs[[t - 1, k]] } else { 0.0 };
                let tanh_c = c.tanh();
                let dh = d_hs[[t, k]] + dh_next[k];
                let d_o = dh * tanh_c;
                let dc = dc_next[k] + dh * o * (1.0 - tanh_c * tanh_c);
                dc_next[k] = dc * f;
                row[k] = dc * cand * i * (1.0 - i);
                row[h + k] = dc * c_prev * f * (1.0 - f);
                row[2 * h + k] = dc * i * (1.0 - cand * cand);
                row[3 * h + k] = d_o * o * (1.0 - o);
            }
            dh_next = self.u.value.t().dot(&row);
        }
        if steps > 1 {
            let later = dz.slice(s![1.., ..]);
            let earlier = cache.hs.slice(s![..steps - 1, ..]);
            self.u.grad += &later.t().dot(&earlier);
        }
        self.w.grad += &dz.t().dot(&cache.xs);
        self.b.grad.row_mut(0).scaled_add(1.0, &dz.sum_axis(Axis(0)));
        dz.dot(&self.w.value)
    }
}

impl Parameterized for Lstm {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.u, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }
}

/// Forward and reverse LSTMs; step `t` of the output is
/// `[h_fwd(t), h_bwd(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
    pub out: Array2<f64>,
}

impl BiLstm {
    pub fn new<R: Rng>(rng: &mut R, in_dim: usize, hidden: usize) -> Self {
        BiLstm { fwd: Lstm::new(rng, in_dim, hidden), bwd: Lstm::new(rng, in_dim, hidden) }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward(&self, xs: ArrayView2<f64>) -> BiLstmCache {
        let fwd = self.fwd.forward(xs);
        let bwd = self.bwd.forward(xs.slice(s![..;-1, ..]));
        let out = concatenate(Axis(1), &[fwd.hs.view(), bwd.hs.slice(s![..;-1, ..])]).expect("equal steps");
        BiLstmCache { fwd, bwd, out }
    }

    pub fn backward(&mut self, cache: &BiLstmCache, d_out: ArrayView2<f64>) -> Array2<f64> {
        let h = self.fwd.hidden;
        let dx_f = self.fwd.backward(&cache.fwd, d_out.slice(s![.., ..h]));
        let dx_b = self.bwd.backward(&cache.bwd, d_out.slice(s![..;-1, h..]));
        dx_f + &dx_b.slice(s![..;-1, ..])
    }
}

impl Parameterized for BiLstm {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.fwd.params();
        p.extend(self.bwd.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.fwd.params_mut();
        p.extend(self.bwd.params_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_param_error, rel_err};
    use crate::nn::normal;

    #[test]
    fn lstm_gradient_check() {
        let mut rng = crate::rng::seeded(21);
        let mut lstm = Lstm::new(&mut rng, 3, 4);
        let xs = normal(&mut rng, 5, 3, 1.0);
        let r = normal(&mut rng, 5, 4, 1.0);
        let loss = |l: &Lstm| (&l.forward(xs.view()).hs * &r).sum();
        let cache = lstm.forward(xs.view());
        let dx = lstm.backward(&cache, r.view());
        assert!(max_param_error(&mut lstm, loss) < 1e-4);

        for t in 0..5 {
            for c in 0..3 {
                let mut xp = xs.clone();
                xp[[t, c]] += 1e-6;
                let mut xm = xs.clone();
                xm[[t, c]] -= 1e-6;
                let up = (&lstm.forward(xp.view()).hs * &r).sum();
                let down = (&lstm.forward(xm.view()).hs * &r).sum();
                assert!(rel_err(dx[[t, c]], (up - down) / 2e-6) < 1e-4);
            }
        }
    }

    #[test]
    fn bilstm_gradient_check() {
        let mut rng = crate::rng::seeded(22);
        let mut bi = BiLstm::new(&mut rng, 2, 3);
        let xs = normal(&mut rng, 4, 2, 1.0);
        let r = normal(&mut rng, 4, 6, 1.0);
        let loss = |l: &BiLstm| (&l.forward(xs.view()).out * &r).sum();
        let cache = bi.forward(xs.view());
        assert_eq!(cache.out.dim(), (4, 6));
        bi.backward(&cache, r.view());
        assert!(max_param_error(&mut bi, loss) < 1e-4);
    }
}
