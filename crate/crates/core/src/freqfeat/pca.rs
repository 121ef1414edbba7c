use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{BlockKind, FeatureBlock};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `k_eff x d_in`, orthonormal rows ordered by decreasing variance.
    pub components: Array2<f64>,
    pub mean: Array1<f64>,
    pub explained_variance: Vec<f64>,
    pub requested_k: usize,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        let total: f64 = self.explained_variance.iter().sum();
        if total <= 0.0 {
            return vec![0.0; self.explained_variance.len()];
        }
        self.explained_variance.iter().map(|v| v / total).collect()
    }

    pub fn transform_matrix(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: x.ncols() });
        }
        let centered = x - &self.mean.view().insert_axis(Axis(0));
        Ok(centered.dot(&self.components.t()))
    }

    pub fn transform_row(&self, x: &[f64]) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: x.len() });
        }
        let centered = Array1::from_iter(x.iter().zip(&self.mean).map(|(a, m)| a - m));
        Ok(self.components.dot(&centered))
    }
}

/// Fits up to `k` principal components. The effective count is clamped to
/// the rank of the centered matrix (minimum one component).
pub fn pca_fit(block: &FeatureBlock, k: usize) -> Result<PcaModel> {
    fit_matrix(&block.matrix, k)
}

pub(crate) fn fit_matrix(x: &Array2<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.dim();
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput("PCA needs at least one row and one column".into()));
    }
    if k == 0 {
        return Err(Error::invalid("PCA k must be at least 1"));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = x - &mean.view().insert_axis(Axis(0));
    let m = DMatrix::from_row_iterator(n, d, centered.iter().copied());
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s_max = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    let tol = s_max * (n.max(d) as f64) * f64::EPSILON;
    let rank = order.iter().filter(|&&i| svd.singular_values[i] > tol).count();
    let k_eff = k.min(rank).max(1).min(order.len());

    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut components = Array2::zeros((k_eff, d));
    let mut explained_variance = Vec::with_capacity(k_eff);
    for (r, &i) in order.iter().take(k_eff).enumerate() {
        let mut row: Vec<f64> = v_t.row(i).iter().copied().collect();
        // sign convention: the largest-magnitude loading is positive
        let pivot = row.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.row_mut(r).assign(&Array1::from(row));
        explained_variance.push(svd.singular_values[i].powi(2) / denom);
    }
    Ok(PcaModel { components, mean, explained_variance, requested_k: k })
}

pub fn pca_transform(model: &PcaModel, block: &FeatureBlock) -> Result<FeatureBlock> {
    let matrix = model.transform_matrix(&block.matrix)?;
    FeatureBlock::new(format!("pca({})", block.name), matrix, BlockKind::Vector)
}
