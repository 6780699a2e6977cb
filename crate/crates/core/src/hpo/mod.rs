//! Hyperparameter search: exhaustive grids, random search and a
//! tree-structured Parzen estimator.

mod optimize;
mod spaces;
mod tpe;

pub use optimize::{grid_search, optimize, read_trials, Method, OptimizeConfig, OptimizeOutcome};
pub use spaces::{
    fnn_space, fnn_tuning_space, gbt_params_from, gbt_params_point, gbt_space, mlp_config_from, mlp_config_point,
    ngboost_grid,
};
pub use tpe::{tpe_suggest, TpeConfig};

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Bool(v) => write!(f, "{v}"),
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Text(v) => f.write_str(v),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dimension {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical { choices: Vec<ParamValue> },
}

impl Dimension {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            Dimension::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Dimension::LogUniform { lo, hi } => lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo < hi,
            Dimension::Integer { lo, hi } => lo <= hi,
            Dimension::Categorical { choices } => !choices.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid bounds for dimension `{name}`: {self:?}"
            )))
        }
    }

    pub fn is_finite_grid(&self) -> bool {
        matches!(self, Dimension::Integer { .. } | Dimension::Categorical { .. })
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (Dimension::Uniform { lo, hi } | Dimension::LogUniform { lo, hi }, ParamValue::Real(x)) => {
                (*lo..=*hi).contains(x)
            }
            (Dimension::Integer { lo, hi }, ParamValue::Int(x)) => (*lo..=*hi).contains(x),
            (Dimension::Categorical { choices }, v) => choices.contains(v),
            _ => false,
        }
    }

    pub fn sample_prior(&self, rng: &mut Rng) -> ParamValue {
        match self {
            Dimension::Uniform { lo, hi } => ParamValue::Real(rng.random_range(*lo..=*hi)),
            Dimension::LogUniform { lo, hi } => {
                ParamValue::Real(rng.random_range(lo.ln()..=hi.ln()).exp().clamp(*lo, *hi))
            }
            Dimension::Integer { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            Dimension::Categorical { choices } => choices[rng.random_range(0..choices.len())].clone(),
        }
    }

    fn grid_values(&self) -> Option<Vec<ParamValue>> {
        match self {
            Dimension::Integer { lo, hi } => Some((*lo..=*hi).map(ParamValue::Int).collect()),
            Dimension::Categorical { choices } => Some(choices.clone()),
            _ => None,
        }
    }
}

/// Ordered, named dimensions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<(String, Dimension)>,
}

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, dim: Dimension) -> Self {
        self.dims.push((name.to_string(), dim));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Config("search space has no dimensions".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (name, d) in &self.dims {
            if !seen.insert(name) {
                return Err(Error::Config(format!("duplicate dimension `{name}`")));
            }
            d.validate(name)?;
        }
        Ok(())
    }

    pub fn contains(&self, p: &Params) -> bool {
        p.len() == self.dims.len() && self.dims.iter().all(|(n, d)| p.get(n).is_some_and(|v| d.contains(v)))
    }

    pub fn sample_prior(&self, rng: &mut Rng) -> Params {
        self.dims
            .iter()
            .map(|(n, d)| (n.clone(), d.sample_prior(rng)))
            .collect()
    }

    /// Every grid point, first dimension varying slowest.
    pub fn grid(&self) -> Result<Vec<Params>> {
        self.validate()?;
        let mut points: Vec<Params> = vec![Params::new()];
        for (name, d) in &self.dims {
            let values = d
                .grid_values()
                .ok_or_else(|| Error::Config(format!("grid search needs finite dimensions; `{name}` is continuous")))?;
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(name.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub params: Params,
    /// Validation MSE; `None` for failed trials.
    pub objective: Option<f64>,
    pub status: TrialStatus,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn ok_objective(&self) -> Option<f64> {
        match self.status {
            TrialStatus::Ok => self.objective,
            TrialStatus::Failed => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn grid_is_lexicographic() {
        let s = SearchSpace::new().with("a", Dimension::Integer { lo: 1, hi: 2 }).with(
            "b",
            Dimension::Categorical {
                choices: vec![ParamValue::Text("x".into()), ParamValue::Text("y".into())],
            },
        );
        let g = s.grid().unwrap();
        let flat: Vec<String> = g.iter().map(|p| format!("{}{}", p["a"], p["b"])).collect();
        assert_eq!(flat, ["1x", "1y", "2x", "2y"]);
    }

    #[test]
    fn continuous_grid_is_a_config_error() {
        let s = SearchSpace::new().with("lr", Dimension::Uniform { lo: 0.0, hi: 1.0 });
        assert!(matches!(s.grid(), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_bounds_rejected() {
        for d in [
            Dimension::Uniform { lo: 1.0, hi: 1.0 },
            Dimension::LogUniform { lo: 0.0, hi: 1.0 },
            Dimension::Integer { lo: 3, hi: 2 },
            Dimension::Categorical { choices: vec![] },
        ] {
            assert!(SearchSpace::new().with("d", d).validate().is_err());
        }
    }

    #[test]
    fn prior_samples_in_bounds() {
        let s = gbt_space();
        let mut rng = seeded(1);
        for _ in 0..200 {
            assert!(s.contains(&s.sample_prior(&mut rng)));
        }
    }

    #[test]
    fn param_values_round_trip_json() {
        let mut p = Params::new();
        p.insert("a".into(), ParamValue::Int(3));
        p.insert("b".into(), ParamValue::Real(1.0));
        p.insert("c".into(), ParamValue::Bool(true));
        p.insert("d".into(), ParamValue::Text("relu".into()));
        let back: Params = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
