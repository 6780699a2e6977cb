use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_presorted, ColumnOrder, Tree, TreeParams};
use super::{check_finite, sample_sorted, Design};
use crate::features::FeatureMatrix;
use crate::rng::seeded;
use crate::{par, Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_leaf_penalty: f64,
    pub min_samples_leaf: usize,
    pub subsample_rows: f64,
    pub subsample_features: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_estimators: 200,
            max_depth: 4,
            learning_rate: 0.05,
            l2_leaf_penalty: 1.0,
            min_samples_leaf: 5,
            subsample_rows: 1.0,
            subsample_features: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    /// Defaults for the Gaussian natural-gradient variant: many small steps
    /// with shallow trees.
    pub fn ngboost_default() -> Self {
        Self {
            n_estimators: 500,
            max_depth: 3,
            learning_rate: 0.01,
            l2_leaf_penalty: 0.0,
            min_samples_leaf: 1,
            subsample_rows: 1.0,
            subsample_features: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v <= 1.0;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.l2_leaf_penalty >= 0.0 && self.l2_leaf_penalty.is_finite()) {
            return Err(Error::Config("l2_leaf_penalty must be >= 0".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be >= 1".into()));
        }
        if !frac(self.subsample_rows) || !frac(self.subsample_features) {
            return Err(Error::Config("subsample fractions must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub(crate) fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            l2_leaf_penalty: self.l2_leaf_penalty,
        }
    }
}

/// Additive tree ensemble: `base_score + learning_rate * sum(tree outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub format_version: u32,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub params: GbtParams,
    pub trees: Vec<Tree>,
    /// Training MSE after each round.
    pub train_mse: Vec<f64>,
}

impl TreeEnsemble {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.base_score + self.learning_rate * s
    }

    /// Predictions for a row-major matrix with `n_features` columns.
    pub fn predict_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.n_features;
        if d == 0 || !x.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: if d == 0 { x.len() } else { x.len() % d },
            });
        }
        let n = x.len() / d;
        Ok(par::map_range(n, |i| self.predict_row(&x[i * d..(i + 1) * d])))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

pub fn gbt_fit(train: &FeatureMatrix, params: &GbtParams) -> Result<TreeEnsemble> {
    let design = Design::new(&train.x, train.n_rows(), train.n_features())?;
    gbt_fit_design(&design, &train.targets, params)
}

/// Squared-error boosting on a raw design matrix.
pub fn gbt_fit_design(design: &Design<'_>, y: &[f64], params: &GbtParams) -> Result<TreeEnsemble> {
    params.validate()?;
    if design.n_rows == 0 {
        return Err(Error::Validation("cannot fit on zero rows".into()));
    }
    if design.n_features == 0 {
        return Err(Error::Validation("cannot fit with zero features".into()));
    }
    if y.len() != design.n_rows {
        return Err(Error::DimensionMismatch {
            expected: design.n_rows,
            actual: y.len(),
        });
    }
    check_finite(design.x, y)?;

    let n = design.n_rows;
    let mut sorted_y = y.to_vec();
    sorted_y.sort_by(f64::total_cmp);
    let base_score = sorted_y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut residuals = vec![0.0; n];
    let order = ColumnOrder::new(design);
    let tree_params = params.tree_params();
    let mut rng = seeded(params.seed);
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut train_mse = Vec::with_capacity(params.n_estimators);
    let mut mask = vec![false; n];

    for _ in 0..params.n_estimators {
        for ((r, t), p) in residuals.iter_mut().zip(y).zip(&pred) {
            *r = t - p;
        }
        let rows = sample_sorted(&mut rng, n, params.subsample_rows);
        let features = sample_sorted(&mut rng, design.n_features, params.subsample_features);
        let row_mask = if rows.len() == n {
            None
        } else {
            mask.iter_mut().for_each(|m| *m = false);
            rows.iter().for_each(|&r| mask[r] = true);
            Some(mask.as_slice())
        };
        let tree = fit_tree_presorted(design, &order, &residuals, row_mask, &features, &tree_params);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict_row(design.row(i));
        }
        train_mse.push(mse(&pred, y));
        trees.push(tree);
    }

    Ok(TreeEnsemble {
        format_version: MODEL_FORMAT_VERSION,
        base_score,
        learning_rate: params.learning_rate,
        n_features: design.n_features,
        params: params.clone(),
        trees,
        train_mse,
    })
}

pub fn gbt_predict(model: &TreeEnsemble, x: &FeatureMatrix) -> Result<Vec<f64>> {
    if x.n_features() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            actual: x.n_features(),
        });
    }
    model.predict_flat(&x.x)
}
