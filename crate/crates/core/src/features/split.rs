use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::{Error, Result};

/// Train/test partition on whole target years.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub test_fraction: f64,
    /// Set once the train-fitted transform has been applied.
    pub scaler: Option<Standardizer>,
}

impl SplitDataset {
    pub fn is_standardized(&self) -> bool {
        self.scaler.is_some()
    }
}

/// Holds out the latest target years whose cumulative row share first
/// reaches `test_fraction`. No year is split across the boundary.
pub fn sequential_split(matrix: &FeatureMatrix, test_fraction: f64) -> Result<SplitDataset> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test_fraction {test_fraction} outside [0, 1]")));
    }
    if matrix.is_empty() {
        return Err(Error::Validation("cannot split an empty feature matrix".into()));
    }
    let total = matrix.n_rows() as f64;
    let years = matrix.years();
    let mut test_years = 0usize;
    let mut held = 0usize;
    // Small slack so that e.g. 3 of 10 equal years counts as reaching 0.3.
    let needed = test_fraction * total - 1e-9;
    for year in years.iter().rev() {
        if held as f64 >= needed {
            break;
        }
        held += matrix.keys.iter().filter(|k| k.target_year == *year).count();
        test_years += 1;
    }
    let boundary = years.len() - test_years;
    let first_test_year = years.get(boundary).copied().unwrap_or(i64::MAX);
    let (mut train_rows, mut test_rows) = (Vec::new(), Vec::new());
    for (i, k) in matrix.keys.iter().enumerate() {
        if k.target_year < first_test_year {
            train_rows.push(i);
        } else {
            test_rows.push(i);
        }
    }
    Ok(SplitDataset {
        train: matrix.select(&train_rows),
        test: matrix.select(&test_rows),
        test_fraction,
        scaler: None,
    })
}

/// Per-column affine transform to zero mean and unit (population) variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero marks a constant column.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(m: &FeatureMatrix) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::Validation("cannot fit a standardizer on zero rows".into()));
        }
        let d = m.n_features();
        let n = m.n_rows() as f64;
        let mut mean = vec![0.0; d];
        for i in 0..m.n_rows() {
            for (acc, v) in mean.iter_mut().zip(m.row(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = vec![0.0; d];
        for i in 0..m.n_rows() {
            for ((acc, v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for ((v, mu), sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = if *sd > 0.0 { (*v - mu) / sd } else { 0.0 };
        }
    }

    pub fn transform(&self, m: &mut FeatureMatrix) {
        let d = m.n_features();
        if d == 0 {
            return;
        }
        for row in m.x.chunks_mut(d) {
            self.transform_row(row);
        }
    }
}

/// Standardizes both sides with statistics from the training rows only.
///
/// Applying it to an already standardized split is an error: the transform
/// is applied exactly once per pipeline.
pub fn standardize_features(mut split: SplitDataset) -> Result<SplitDataset> {
    if split.is_standardized() {
        return Err(Error::Validation("split is already standardized".into()));
    }
    let scaler = Standardizer::fit(&split.train)?;
    scaler.transform(&mut split.train);
    scaler.transform(&mut split.test);
    split.scaler = Some(scaler);
    Ok(split)
}
