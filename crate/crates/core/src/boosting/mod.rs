//! Gradient-boosted regression trees.
//!
//! [`gbt_fit`] boosts squared error: every round fits a tree to the current
//! residuals and adds it shrunk by the learning rate, so predictions are
//! `base_score + learning_rate * sum(trees)`. [`ngboost_fit`] boosts the mean
//! and log standard deviation of a Gaussian along natural gradients of its
//! negative log-likelihood.

mod gbt;
mod ngboost;
mod tree;

pub use gbt::{gbt_fit, gbt_fit_design, gbt_predict, GbtParams, TreeEnsemble};
pub use ngboost::{ngboost_fit, ngboost_fit_design, GaussianPrediction, NgbModel, SIGMA_FLOOR};
pub use tree::{fit_tree, fit_tree_presorted, ColumnOrder, Node, Tree, TreeParams, GAIN_EPSILON};

use crate::{Error, Result};

/// Borrowed row-major design matrix.
#[derive(Debug, Clone, Copy)]
pub struct Design<'a> {
    pub x: &'a [f64],
    pub n_rows: usize,
    pub n_features: usize,
}

impl<'a> Design<'a> {
    pub fn new(x: &'a [f64], n_rows: usize, n_features: usize) -> Result<Self> {
        if x.len() != n_rows * n_features {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_features,
                actual: x.len(),
            });
        }
        Ok(Self { x, n_rows, n_features })
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.n_features + feature]
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }
}

fn check_finite(x: &[f64], y: &[f64]) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature value at flat index {i}")));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("target at row {i}")));
    }
    Ok(())
}

/// Draws `round(frac * n)` (at least one) sorted indices out of `n`.
fn sample_sorted(rng: &mut crate::rng::Rng, n: usize, frac: f64) -> Vec<usize> {
    if frac >= 1.0 {
        return (0..n).collect();
    }
    let k = ((frac * n as f64).round() as usize).clamp(1, n);
    let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}
