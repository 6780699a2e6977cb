//! Feature attributions and importance rankings.
//!
//! [`shapley_exact`] enumerates every coalition of a small feature subset,
//! filling absent features from background rows. [`permutation_importance`]
//! ranks all features by the loss increase when a column is shuffled.

mod permutation;
mod report;
mod shapley;

pub use permutation::permutation_importance;
pub use report::{importance_report, write_importance_csv, ImportanceReport};
pub use shapley::{sample_background, shapley_exact, Attribution, MAX_SHAPLEY_FEATURES};

use serde::{Deserialize, Serialize};

use crate::boosting::{NgbModel, TreeEnsemble};
use crate::evaluate::TrainedModel;
use crate::neuralnet::MlpModel;
use crate::{Error, Result};

/// A model evaluated on row-major batches.
pub trait Predict: Sync {
    fn input_dim(&self) -> usize;

    /// Predictions for `x.len() / input_dim()` rows.
    fn predict_flat(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Adapts a per-row closure.
pub struct RowFn<F> {
    pub width: usize,
    pub f: F,
}

impl<F> RowFn<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(width: usize, f: F) -> Self {
        Self { width, f }
    }
}

impl<F> Predict for RowFn<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn input_dim(&self) -> usize {
        self.width
    }

    fn predict_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.width == 0 || !x.len().is_multiple_of(self.width) {
            return Err(Error::DimensionMismatch {
                expected: self.width,
                actual: x.len(),
            });
        }
        Ok(crate::par::map_range(x.len() / self.width, |i| {
            (self.f)(&x[i * self.width..(i + 1) * self.width])
        }))
    }
}

impl Predict for TreeEnsemble {
    fn input_dim(&self) -> usize {
        self.n_features
    }

    fn predict_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        TreeEnsemble::predict_flat(self, x)
    }
}

impl Predict for NgbModel {
    fn input_dim(&self) -> usize {
        self.n_features
    }

    fn predict_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        NgbModel::predict_flat(self, x)
    }
}

impl Predict for MlpModel {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        MlpModel::predict_flat(self, x)
    }
}

impl Predict for TrainedModel {
    fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Capm => 0,
            TrainedModel::Gbt(m) => m.input_dim(),
            TrainedModel::Ngboost(m) => m.input_dim(),
            TrainedModel::Mlp(m) => m.input_dim(),
        }
    }

    fn predict_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Capm => Err(Error::Validation(
                "CAPM has no feature-based predictor to explain".into(),
            )),
            TrainedModel::Gbt(m) => Predict::predict_flat(m, x),
            TrainedModel::Ngboost(m) => Predict::predict_flat(m, x),
            TrainedModel::Mlp(m) => Predict::predict_flat(m, x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    /// Ranking score, never negative.
    pub importance: f64,
    /// Unclipped score; permutation importance can be negative.
    pub raw: f64,
}

/// Features in descending order of importance; ties keep feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceRanking {
    /// Ranks `scores` aligned with `names`; negative scores rank as zero.
    pub fn from_scores(names: &[String], scores: &[f64]) -> Result<Self> {
        if names.len() != scores.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                actual: scores.len(),
            });
        }
        let mut entries: Vec<ImportanceEntry> = names
            .iter()
            .zip(scores)
            .map(|(n, s)| ImportanceEntry {
                feature: n.clone(),
                importance: s.max(0.0),
                raw: *s,
            })
            .collect();
        entries.sort_by(|a, b| b.importance.total_cmp(&a.importance));
        Ok(Self { entries })
    }

    /// Mean absolute attribution per feature over several explained rows.
    pub fn from_attributions(attributions: &[Attribution]) -> Result<Self> {
        let first = attributions
            .first()
            .ok_or_else(|| Error::Validation("no attributions to rank".into()))?;
        let mut sums = vec![0.0; first.feature_names.len()];
        for a in attributions {
            if a.feature_names != first.feature_names {
                return Err(Error::Validation("attributions cover different features".into()));
            }
            for (s, p) in sums.iter_mut().zip(&a.phi) {
                *s += p.abs();
            }
        }
        let n = attributions.len() as f64;
        let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
        Self::from_scores(&first.feature_names, &means)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Zero-based rank of `feature`.
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.feature == feature)
    }

    pub fn top(&self, k: usize) -> &[ImportanceEntry] {
        &self.entries[..k.min(self.entries.len())]
    }
}
