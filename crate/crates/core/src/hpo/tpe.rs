//! Tree-structured Parzen estimator.
//!
//! Completed trials are ranked by objective and the best `ceil(gamma * n)`
//! form the "good" set, the rest the "bad" set. Each dimension gets an
//! independent density per set: continuous and integer dimensions use a
//! mixture of a uniform prior and Gaussians truncated to the bounds, centred
//! on the observations, with Scott's bandwidth `1.06 * sd * k^(-1/5)` floored
//! at 5% of the range; log-uniform dimensions are modelled in log space.
//! Categorical dimensions use Laplace-smoothed frequencies. Candidates drawn
//! from the good densities are scored by `sum(log l(x) - log g(x))`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{Dimension, ParamValue, Params, SearchSpace, TrialRecord};
use crate::rng::Rng;

const BANDWIDTH_FLOOR: f64 = 0.05;
const MIN_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 10,
            n_candidates: 24,
        }
    }
}

/// Parzen mixture on `[lo, hi]`.
struct Parzen {
    lo: f64,
    hi: f64,
    kernels: Vec<(Normal, f64)>,
}

impl Parzen {
    fn fit(lo: f64, hi: f64, obs: &[f64]) -> Self {
        let k = obs.len();
        let range = hi - lo;
        let h = if k == 0 {
            range
        } else {
            let mean = obs.iter().sum::<f64>() / k as f64;
            let sd = (obs.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
            (1.06 * sd * (k as f64).powf(-0.2)).clamp(BANDWIDTH_FLOOR * range, range)
        };
        let kernels = obs
            .iter()
            .filter_map(|&c| {
                let n = Normal::new(c, h).ok()?;
                let mass = n.cdf(hi) - n.cdf(lo);
                (mass > MIN_MASS).then_some((n, mass))
            })
            .collect();
        Self { lo, hi, kernels }
    }

    fn weight(&self) -> f64 {
        1.0 / (self.kernels.len() + 1) as f64
    }

    fn pdf(&self, x: f64) -> f64 {
        let w = self.weight();
        let prior = w / (self.hi - self.lo);
        prior + self.kernels.iter().map(|(n, mass)| w * n.pdf(x) / mass).sum::<f64>()
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        let pick = rng.random_range(0..=self.kernels.len());
        let x = match self.kernels.get(pick) {
            None => rng.random_range(self.lo..=self.hi),
            Some((n, _)) => {
                let (a, b) = (n.cdf(self.lo), n.cdf(self.hi));
                n.inverse_cdf(a + rng.random::<f64>() * (b - a))
            }
        };
        if x.is_finite() {
            x.clamp(self.lo, self.hi)
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

enum Estimator {
    Continuous {
        good: Parzen,
        bad: Parzen,
    },
    Categorical {
        choices: Vec<ParamValue>,
        good: Vec<f64>,
        bad: Vec<f64>,
    },
}

/// Internal coordinate of a parameter value.
fn coordinate(dim: &Dimension, v: &ParamValue) -> Option<f64> {
    match dim {
        Dimension::LogUniform { .. } => v.as_f64().map(f64::ln),
        _ => v.as_f64(),
    }
}

fn bounds(dim: &Dimension) -> (f64, f64) {
    match dim {
        Dimension::Uniform { lo, hi } => (*lo, *hi),
        Dimension::LogUniform { lo, hi } => (lo.ln(), hi.ln()),
        Dimension::Integer { lo, hi } => (*lo as f64 - 0.5, *hi as f64 + 0.5),
        Dimension::Categorical { .. } => unreachable!("categorical has no bounds"),
    }
}

fn decode(dim: &Dimension, x: f64) -> ParamValue {
    match dim {
        Dimension::Uniform { lo, hi } => ParamValue::Real(x.clamp(*lo, *hi)),
        Dimension::LogUniform { lo, hi } => ParamValue::Real(x.exp().clamp(*lo, *hi)),
        Dimension::Integer { lo, hi } => ParamValue::Int((x.round() as i64).clamp(*lo, *hi)),
        Dimension::Categorical { .. } => unreachable!("categorical is not decoded"),
    }
}

fn frequencies(choices: &[ParamValue], obs: &[&ParamValue]) -> Vec<f64> {
    let denom = (obs.len() + choices.len()) as f64;
    choices
        .iter()
        .map(|c| (obs.iter().filter(|o| **o == c).count() + 1) as f64 / denom)
        .collect()
}

impl Estimator {
    fn fit(dim: &Dimension, name: &str, good: &[&Params], bad: &[&Params]) -> Self {
        match dim {
            Dimension::Categorical { choices } => {
                let pick = |set: &[&Params]| -> Vec<f64> {
                    let obs: Vec<&ParamValue> = set.iter().filter_map(|p| p.get(name)).collect();
                    frequencies(choices, &obs)
                };
                Estimator::Categorical {
                    choices: choices.clone(),
                    good: pick(good),
                    bad: pick(bad),
                }
            }
            _ => {
                let (lo, hi) = bounds(dim);
                let pick = |set: &[&Params]| -> Vec<f64> {
                    set.iter()
                        .filter_map(|p| p.get(name).and_then(|v| coordinate(dim, v)))
                        .collect()
                };
                Estimator::Continuous {
                    good: Parzen::fit(lo, hi, &pick(good)),
                    bad: Parzen::fit(lo, hi, &pick(bad)),
                }
            }
        }
    }

    /// A draw from the good density and its log-ratio score.
    fn draw(&self, dim: &Dimension, rng: &mut Rng) -> (ParamValue, f64) {
        match self {
            Estimator::Categorical { choices, good, bad } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut idx = choices.len() - 1;
                for (i, p) in good.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                (choices[idx].clone(), good[idx].ln() - bad[idx].ln())
            }
            Estimator::Continuous { good, bad } => {
                let v = decode(dim, good.sample(rng));
                let x = coordinate(dim, &v).expect("decoded value is numeric");
                (v, good.pdf(x).ln() - bad.pdf(x).ln())
            }
        }
    }
}

/// Suggests the next point given completed trials.
pub fn tpe_suggest(history: &[TrialRecord], space: &SearchSpace, config: &TpeConfig, rng: &mut Rng) -> Params {
    let mut done: Vec<(&TrialRecord, f64)> = history
        .iter()
        .filter_map(|t| t.ok_objective().filter(|v| v.is_finite()).map(|v| (t, v)))
        .filter(|(t, _)| space.contains(&t.params))
        .collect();
    if done.len() < config.n_startup.max(2) {
        return space.sample_prior(rng);
    }
    let first = done[0].1;
    if done.iter().all(|(_, v)| *v == first) {
        return space.sample_prior(rng);
    }
    done.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.index.cmp(&b.0.index)));
    let n = done.len();
    let n_good = ((config.gamma * n as f64).ceil() as usize).clamp(1, n - 1);
    let good: Vec<&Params> = done[..n_good].iter().map(|(t, _)| &t.params).collect();
    let bad: Vec<&Params> = done[n_good..].iter().map(|(t, _)| &t.params).collect();
    let estimators: Vec<Estimator> = space
        .dims
        .iter()
        .map(|(name, dim)| Estimator::fit(dim, name, &good, &bad))
        .collect();

    let mut best: Option<(Params, f64)> = None;
    for _ in 0..config.n_candidates.max(1) {
        let mut params = Params::new();
        let mut score = 0.0;
        for ((name, dim), est) in space.dims.iter().zip(&estimators) {
            let (v, s) = est.draw(dim, rng);
            params.insert(name.clone(), v);
            score += s;
        }
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((params, score));
        }
    }
    best.map(|(p, _)| p).expect("at least one candidate")
}
