use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::Predict;
use crate::features::FeatureMatrix;
use crate::rng::seeded;
use crate::{par, Error, Result};

/// Largest subset `shapley_exact` will enumerate (2^15 coalitions).
pub const MAX_SHAPLEY_FEATURES: usize = 15;
pub const EFFICIENCY_TOLERANCE: f64 = 1e-9;
const ROWS_PER_BATCH: usize = 1 << 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature_names: Vec<String>,
    /// Column indices of the explained features.
    pub features: Vec<usize>,
    /// Mean prediction over the background rows.
    pub base_value: f64,
    pub phi: Vec<f64>,
    /// Mean prediction with the explained features fixed at the row's
    /// values; the model's prediction for the row when every feature is
    /// explained.
    pub prediction: f64,
}

impl Attribution {
    /// `base_value + sum(phi) - prediction`.
    pub fn efficiency_gap(&self) -> f64 {
        self.base_value + self.phi.iter().sum::<f64>() - self.prediction
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `n` training rows drawn without replacement, in their original order.
pub fn sample_background(train: &FeatureMatrix, n: usize, seed: u64) -> Vec<f64> {
    let rows = train.n_rows();
    let mut picked: Vec<usize> = if n >= rows {
        (0..rows).collect()
    } else {
        index::sample(&mut seeded(seed), rows, n).into_vec()
    };
    picked.sort_unstable();
    picked.iter().flat_map(|&i| train.row(i).iter().copied()).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Mean prediction for every coalition mask over `features`.
fn coalition_values<P: Predict + ?Sized>(
    model: &P,
    row: &[f64],
    background: &[f64],
    features: &[usize],
) -> Result<Vec<f64>> {
    let width = row.len();
    let n_bg = background.len() / width;
    let n_masks = 1usize << features.len();
    let per_batch = (ROWS_PER_BATCH / n_bg).max(1);
    let batches = par::map_range(n_masks.div_ceil(per_batch), |b| -> Result<Vec<f64>> {
        let lo = b * per_batch;
        let hi = (lo + per_batch).min(n_masks);
        let mut x = Vec::with_capacity((hi - lo) * background.len());
        for mask in lo..hi {
            for bg in background.chunks_exact(width) {
                let start = x.len();
                x.extend_from_slice(bg);
                for (k, &j) in features.iter().enumerate() {
                    if mask >> k & 1 == 1 {
                        x[start + j] = row[j];
                    }
                }
            }
        }
        let pred = model.predict_flat(&x)?;
        Ok(pred
            .chunks_exact(n_bg)
            .map(|c| c.iter().sum::<f64>() / n_bg as f64)
            .collect())
    });
    let mut values = Vec::with_capacity(n_masks);
    for b in batches {
        values.extend(b?);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("prediction for coalition {i:#b}")));
    }
    Ok(values)
}

/// Exact Shapley values of `features` for `row`.
///
/// `v(S)` is the mean prediction over background rows whose columns in `S`
/// are overwritten with the row's values. Background rows are row-major with
/// the model's input width.
pub fn shapley_exact<P: Predict + ?Sized>(
    model: &P,
    feature_names: &[String],
    row: &[f64],
    background: &[f64],
    features: &[usize],
) -> Result<Attribution> {
    let width = model.input_dim();
    let d = features.len();
    if d > MAX_SHAPLEY_FEATURES {
        return Err(Error::Config(format!(
            "exact Shapley values over {d} features would need 2^{d} coalitions; the limit is {MAX_SHAPLEY_FEATURES}, use permutation_importance for wider rankings"
        )));
    }
    if row.len() != width || feature_names.len() != width {
        return Err(Error::DimensionMismatch {
            expected: width,
            actual: if row.len() != width {
                row.len()
            } else {
                feature_names.len()
            },
        });
    }
    if background.is_empty() || !background.len().is_multiple_of(width) {
        return Err(Error::Validation("background must hold at least one full row".into()));
    }
    for (k, &j) in features.iter().enumerate() {
        if j >= width {
            return Err(Error::Validation(format!(
                "feature index {j} out of range for {width} columns"
            )));
        }
        if features[..k].contains(&j) {
            return Err(Error::Validation(format!("feature index {j} listed twice")));
        }
    }

    let v = coalition_values(model, row, background, features)?;
    let full = (1usize << d) - 1;
    let weights: Vec<f64> = (0..d).map(|s| 1.0 / (d as f64 * binomial(d - 1, s))).collect();
    let phi: Vec<f64> = par::map_range(d, |i| {
        let bit = 1usize << i;
        (0..=full)
            .filter(|m| m & bit == 0)
            .map(|m| weights[m.count_ones() as usize] * (v[m | bit] - v[m]))
            .sum()
    });
    let attribution = Attribution {
        feature_names: features.iter().map(|&j| feature_names[j].clone()).collect(),
        features: features.to_vec(),
        base_value: v[0],
        phi,
        prediction: v[full],
    };
    let gap = attribution.efficiency_gap();
    if gap.abs() >= EFFICIENCY_TOLERANCE {
        return Err(Error::Numerical(format!(
            "Shapley values miss the prediction by {gap:e}"
        )));
    }
    Ok(attribution)
}
