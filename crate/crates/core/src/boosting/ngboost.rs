//! Natural-gradient boosting of a Gaussian predictive distribution.
//!
//! Parameters are `(mu, s = ln sigma)`. For the negative log-likelihood
//! `s + (y - mu)^2 / (2 exp(2s)) + ln(2 pi)/2` the Fisher information is
//! `diag(1/sigma^2, 2)`, so the natural gradient is
//! `(-(y - mu), (1 - (y - mu)^2 / sigma^2) / 2)`. Each round fits one tree per
//! parameter to the negative natural gradient, then scales the joint step by
//! the largest `rho` in `{1, 1/2, 1/4, ...}` for which the shrunk update does
//! not increase the training NLL (zero if none does).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::gbt::MODEL_FORMAT_VERSION;
use super::tree::{fit_tree_presorted, ColumnOrder, Tree};
use super::{check_finite, sample_sorted, Design, GbtParams};
use crate::features::FeatureMatrix;
use crate::rng::seeded;
use crate::{par, Error, Result};

pub const SIGMA_FLOOR: f64 = 1e-6;
const LINE_SEARCH_STEPS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgbModel {
    pub format_version: u32,
    pub base_mu: f64,
    pub base_log_sigma: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub params: GbtParams,
    pub mu_trees: Vec<Tree>,
    pub log_sigma_trees: Vec<Tree>,
    /// Line-search scale applied to each round.
    pub scalings: Vec<f64>,
    /// Mean training NLL after each round.
    pub train_nll: Vec<f64>,
}

fn log_sigma_floor() -> f64 {
    SIGMA_FLOOR.ln()
}

fn nll(y: f64, mu: f64, s: f64) -> f64 {
    let z = (y - mu) * (-s).exp();
    s + 0.5 * z * z + 0.5 * (2.0 * PI).ln()
}

fn mean_nll(y: &[f64], mu: &[f64], s: &[f64]) -> f64 {
    y.iter().zip(mu).zip(s).map(|((y, m), s)| nll(*y, *m, *s)).sum::<f64>() / y.len() as f64
}

impl NgbModel {
    pub fn predict_dist_row(&self, row: &[f64]) -> GaussianPrediction {
        let mut mu = self.base_mu;
        let mut s = self.base_log_sigma;
        for ((tm, ts), rho) in self.mu_trees.iter().zip(&self.log_sigma_trees).zip(&self.scalings) {
            let step = self.learning_rate * rho;
            mu += step * tm.predict_row(row);
            s = (s + step * ts.predict_row(row)).max(log_sigma_floor());
        }
        GaussianPrediction { mu, sigma: s.exp() }
    }

    pub fn predict_dist_flat(&self, x: &[f64]) -> Result<Vec<GaussianPrediction>> {
        let d = self.n_features;
        if d == 0 || !x.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: x.len(),
            });
        }
        Ok(par::map_range(x.len() / d, |i| {
            self.predict_dist_row(&x[i * d..(i + 1) * d])
        }))
    }

    /// Point predictions (the predicted mean).
    pub fn predict_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_dist_flat(x)?.into_iter().map(|p| p.mu).collect())
    }

    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if m.n_features() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: m.n_features(),
            });
        }
        self.predict_flat(&m.x)
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

pub fn ngboost_fit(train: &FeatureMatrix, params: &GbtParams) -> Result<NgbModel> {
    let design = Design::new(&train.x, train.n_rows(), train.n_features())?;
    ngboost_fit_design(&design, &train.targets, params)
}

pub fn ngboost_fit_design(design: &Design<'_>, y: &[f64], params: &GbtParams) -> Result<NgbModel> {
    params.validate()?;
    if design.n_rows == 0 || design.n_features == 0 {
        return Err(Error::Validation("cannot fit on an empty design".into()));
    }
    if y.len() != design.n_rows {
        return Err(Error::DimensionMismatch {
            expected: design.n_rows,
            actual: y.len(),
        });
    }
    check_finite(design.x, y)?;
    let n = design.n_rows;
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let base_mu = sorted.iter().sum::<f64>() / n as f64;
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - base_mu) * (v - base_mu)).collect();
    dev.sort_by(f64::total_cmp);
    let var = dev.iter().sum::<f64>() / n as f64;
    let base_log_sigma = var.sqrt().max(SIGMA_FLOOR).ln();

    let mut mu = vec![base_mu; n];
    let mut s = vec![base_log_sigma; n];
    let order = ColumnOrder::new(design);
    let tree_params = params.tree_params();
    let mut rng = seeded(params.seed);
    let mut mask = vec![false; n];
    let mut model = NgbModel {
        format_version: MODEL_FORMAT_VERSION,
        base_mu,
        base_log_sigma,
        learning_rate: params.learning_rate,
        n_features: design.n_features,
        params: params.clone(),
        mu_trees: Vec::with_capacity(params.n_estimators),
        log_sigma_trees: Vec::with_capacity(params.n_estimators),
        scalings: Vec::with_capacity(params.n_estimators),
        train_nll: Vec::with_capacity(params.n_estimators),
    };
    let mut current = mean_nll(y, &mu, &s);
    let mut g_mu = vec![0.0; n];
    let mut g_s = vec![0.0; n];
    let mut cand_mu = vec![0.0; n];
    let mut cand_s = vec![0.0; n];

    for _ in 0..params.n_estimators {
        for i in 0..n {
            let r = y[i] - mu[i];
            let inv_var = (-2.0 * s[i]).exp();
            g_mu[i] = r;
            g_s[i] = 0.5 * (r * r * inv_var - 1.0);
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
        let t_mu = fit_tree_presorted(design, &order, &g_mu, row_mask, &features, &tree_params);
        let t_s = fit_tree_presorted(design, &order, &g_s, row_mask, &features, &tree_params);
        let step_mu: Vec<f64> = (0..n).map(|i| t_mu.predict_row(design.row(i))).collect();
        let step_s: Vec<f64> = (0..n).map(|i| t_s.predict_row(design.row(i))).collect();

        let mut rho = 1.0;
        let mut accepted = None;
        for _ in 0..LINE_SEARCH_STEPS {
            let step = params.learning_rate * rho;
            for i in 0..n {
                cand_mu[i] = mu[i] + step * step_mu[i];
                cand_s[i] = (s[i] + step * step_s[i]).max(log_sigma_floor());
            }
            let value = mean_nll(y, &cand_mu, &cand_s);
            if value.is_finite() && value <= current {
                accepted = Some(value);
                break;
            }
            rho *= 0.5;
        }
        match accepted {
            Some(value) => {
                std::mem::swap(&mut mu, &mut cand_mu);
                std::mem::swap(&mut s, &mut cand_s);
                current = value;
            }
            None => rho = 0.0,
        }
        model.mu_trees.push(t_mu);
        model.log_sigma_trees.push(t_s);
        model.scalings.push(rho);
        model.train_nll.push(current);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_recovers_mean() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let d = Design::new(&x, 50, 1).unwrap();
        let m = ngboost_fit_design(&d, &[2.5; 50], &GbtParams::ngboost_default()).unwrap();
        for p in m.predict_dist_flat(&x).unwrap() {
            assert!((p.mu - 2.5).abs() < 1e-3);
            assert!(p.sigma >= SIGMA_FLOOR);
        }
    }

    #[test]
    fn nll_never_increases() {
        let x: Vec<f64> = (0..80).map(|i| (i as f64 * 0.13).cos()).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| 2.0 * v + 0.1 * ((i * 37 % 11) as f64 - 5.0))
            .collect();
        let d = Design::new(&x, 80, 1).unwrap();
        let m = ngboost_fit_design(
            &d,
            &y,
            &GbtParams {
                n_estimators: 100,
                ..GbtParams::ngboost_default()
            },
        )
        .unwrap();
        for w in m.train_nll.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(m.train_nll.last().unwrap() < m.train_nll.first().unwrap());
    }

    #[test]
    fn prediction_replays_training_path() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v).sin()).collect();
        let d = Design::new(&x, 30, 1).unwrap();
        let m = ngboost_fit_design(
            &d,
            &y,
            &GbtParams {
                n_estimators: 40,
                ..GbtParams::ngboost_default()
            },
        )
        .unwrap();
        let preds = m.predict_dist_flat(&x).unwrap();
        let mu: Vec<f64> = preds.iter().map(|p| p.mu).collect();
        let s: Vec<f64> = preds.iter().map(|p| p.sigma.ln()).collect();
        let replay = mean_nll(&y, &mu, &s);
        assert!((replay - m.train_nll.last().unwrap()).abs() < 1e-9);
    }
}
