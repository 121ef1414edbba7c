use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use super::{glorot_uniform, Param, Parameterized};

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
}

impl Dense {
    pub fn new<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        Dense { w: Param::new(glorot_uniform(rng, output, input)), b: Param::zeros(1, output) }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Dense { w: Param::zeros(output, input), b: Param::zeros(1, output) }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.nrows()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.w.value.dot(&x) + &self.b.row()
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: ArrayView1<f64>, dy: ArrayView1<f64>) -> Array1<f64> {
        let outer: Array2<f64> = dy.insert_axis(Axis(1)).dot(&x.insert_axis(Axis(0)));
        self.w.grad += &outer;
        self.b.grad.row_mut(0).scaled_add(1.0, &dy);
        self.w.value.t().dot(&dy)
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_param_error, rel_err};
    use ndarray::array;

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::rng::seeded(5);
        let mut layer = Dense::new(&mut rng, 4, 3);
        layer.b.value = array![[0.1, -0.2, 0.3]];
        let x = array![0.5, -1.0, 2.0, 0.25];
        let r = array![1.0, -2.0, 0.5];
        let loss = |l: &Dense| l.forward(x.view()).dot(&r);
        let dx = layer.backward(x.view(), r.view());
        assert!(max_param_error(&mut layer, loss) < 1e-6);
        for k in 0..4 {
            let mut xp = x.clone();
            xp[k] += 1e-6;
            let mut xm = x.clone();
            xm[k] -= 1e-6;
            let num = (layer.forward(xp.view()).dot(&r) - layer.forward(xm.view()).dot(&r)) / 2e-6;
            assert!(rel_err(dx[k], num) < 1e-6);
        }
    }
}
