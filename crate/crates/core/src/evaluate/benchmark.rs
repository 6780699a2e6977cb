use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    assemble_report, config_digest, keys_digest, mse_of, sha256_hex, BenchmarkReport, ModelKind, ModelResult,
    ReportMetadata,
};
use crate::boosting::{gbt_fit, ngboost_fit, GbtParams, NgbModel, TreeEnsemble};
use crate::capm::{capm_predict_all, CapmEstimate, BETA_WINDOW_MONTHS, RISK_FREE_SERIES};
use crate::dataset::{FundamentalsPanel, MacroPanel, PricePanel};
use crate::features::{build_feature_matrix, sequential_split, standardize_features, FeatureMatrix, SplitDataset};
use crate::hpo::{
    fnn_space, fnn_tuning_space, gbt_params_from, gbt_params_point, gbt_space, mlp_config_from, mlp_config_point,
    ngboost_grid, optimize, Method, OptimizeConfig, Params, SearchSpace, TpeConfig, TrialRecord,
};
use crate::neuralnet::{mlp_init, mlp_train, MlpConfig, MlpModel, Preset};
use crate::rng::derive;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HpoBudget {
    pub method: Method,
    pub gbt_trials: usize,
    /// NGBoost always searches its grid; this caps the number of points.
    pub ngboost_trials: usize,
    pub fnn_trials: usize,
    pub batch_width: usize,
    /// Share of training years held out as the tuning objective.
    pub validation_fraction: f64,
    /// Search network depth and widths; when off only penalty, step size,
    /// activation and batch norm are tuned.
    pub fnn_structure: bool,
    /// Evaluate the base configuration as the first trial when it lies in
    /// the search space.
    pub include_base: bool,
}

impl Default for HpoBudget {
    fn default() -> Self {
        Self {
            method: Method::Tpe,
            gbt_trials: 50,
            ngboost_trials: 8,
            fnn_trials: 100,
            batch_width: 4,
            validation_fraction: 0.2,
            fnn_structure: true,
            include_base: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub test_fraction: f64,
    pub window_years: usize,
    pub roster: Vec<ModelKind>,
    pub budget: HpoBudget,
    pub gbt: GbtParams,
    pub ngboost: GbtParams,
    pub shallow_fnn: MlpConfig,
    pub deep_fnn: MlpConfig,
    pub data_source: String,
    /// Directory for per-model `trials_<model>.jsonl` logs.
    #[serde(skip)]
    pub trials_dir: Option<PathBuf>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            test_fraction: 0.30,
            window_years: 3,
            roster: ModelKind::ALL.to_vec(),
            budget: HpoBudget::default(),
            gbt: GbtParams::default(),
            ngboost: GbtParams::ngboost_default(),
            shallow_fnn: baseline_fnn(MlpConfig::shallow()),
            deep_fnn: baseline_fnn(MlpConfig::deep()),
            data_source: "unspecified".into(),
            trials_dir: None,
        }
    }
}

fn baseline_fnn(mut c: MlpConfig) -> MlpConfig {
    c.batch_norm.iter_mut().for_each(|b| *b = false);
    c.l2_penalty = 1e-2;
    c.input_clip = Some(2.0);
    c
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Capm,
    Gbt(TreeEnsemble),
    Ngboost(NgbModel),
    Mlp(MlpModel),
}

impl TrainedModel {
    /// Predictions on a matrix standardized with the training scaler.
    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Capm => Err(Error::Validation("CAPM predicts from panels, not features".into())),
            TrainedModel::Gbt(g) => crate::boosting::gbt_predict(g, m),
            TrainedModel::Ngboost(n) => n.predict(m),
            TrainedModel::Mlp(n) => n.predict(m),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            TrainedModel::Capm => Ok("{}".into()),
            TrainedModel::Gbt(g) => g.to_json(),
            TrainedModel::Ngboost(n) => n.to_json(),
            TrainedModel::Mlp(n) => n.to_json(),
        }
    }

    pub fn from_json(kind: ModelKind, s: &str) -> Result<Self> {
        Ok(match kind {
            ModelKind::Capm => TrainedModel::Capm,
            ModelKind::Gbt => TrainedModel::Gbt(TreeEnsemble::from_json(s)?),
            ModelKind::Ngboost => TrainedModel::Ngboost(NgbModel::from_json(s)?),
            ModelKind::ShallowFnn | ModelKind::DeepFnn => TrainedModel::Mlp(MlpModel::from_json(s)?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    /// Outer split with standardized features.
    pub split: SplitDataset,
    pub models: Vec<(ModelKind, TrainedModel)>,
    pub predictions: Vec<(ModelKind, Vec<f64>)>,
    pub capm_estimates: Vec<CapmEstimate>,
    pub histories: Vec<(ModelKind, Vec<TrialRecord>)>,
}

struct Fitted {
    model: TrainedModel,
    predictions: Vec<f64>,
    digest: String,
    history: Vec<TrialRecord>,
}

struct Context<'a> {
    config: &'a BenchmarkConfig,
    inner: &'a SplitDataset,
    outer: &'a SplitDataset,
}

impl Context<'_> {
    fn search<F>(
        &self,
        kind: ModelKind,
        space: &SearchSpace,
        method: Method,
        n_trials: usize,
        base: Option<Params>,
        objective: F,
    ) -> Result<(Params, Vec<TrialRecord>)>
    where
        F: Fn(&Params) -> Result<f64> + Sync,
    {
        if n_trials == 0 {
            return Ok((Params::new(), Vec::new()));
        }
        let b = &self.config.budget;
        let cfg = OptimizeConfig {
            n_trials,
            method,
            seed: derive(self.config.seed, &format!("hpo/{}", kind.name())),
            tpe: TpeConfig::default(),
            batch_width: b.batch_width,
            trials_path: self
                .config
                .trials_dir
                .as_ref()
                .map(|d| d.join(format!("trials_{}.jsonl", kind.name()))),
            initial: base.filter(|_| b.include_base).into_iter().collect(),
        };
        let out = optimize(space, objective, &cfg)?;
        log::info!(
            "{}: best validation MSE {:.6} after {} trials",
            kind.name(),
            out.best.objective.unwrap_or(f64::NAN),
            out.history.len()
        );
        Ok((out.best.params, out.history))
    }

    fn fit_gbt(&self, kind: ModelKind) -> Result<Fitted> {
        let ngb = kind == ModelKind::Ngboost;
        let mut base = if ngb {
            self.config.ngboost.clone()
        } else {
            self.config.gbt.clone()
        };
        base.seed = derive(self.config.seed, kind.name());
        let (space, method, trials) = if ngb {
            (ngboost_grid(), Method::Grid, self.config.budget.ngboost_trials)
        } else {
            (gbt_space(), self.config.budget.method, self.config.budget.gbt_trials)
        };
        let inner = self.inner;
        let start = gbt_params_point(&base, &space);
        let (best, history) = self.search(kind, &space, method, trials, start, |p| {
            let params = gbt_params_from(p, &base)?;
            let pred = if ngb {
                ngboost_fit(&inner.train, &params)?.predict(&inner.test)?
            } else {
                crate::boosting::gbt_predict(&gbt_fit(&inner.train, &params)?, &inner.test)?
            };
            mse_of(&pred, &inner.test.targets)
        })?;
        let params = gbt_params_from(&best, &base)?;
        let digest = config_digest(&(kind, &params))?;
        let (model, predictions) = if ngb {
            let m = ngboost_fit(&self.outer.train, &params)?;
            let p = m.predict(&self.outer.test)?;
            (TrainedModel::Ngboost(m), p)
        } else {
            let m = gbt_fit(&self.outer.train, &params)?;
            let p = crate::boosting::gbt_predict(&m, &self.outer.test)?;
            (TrainedModel::Gbt(m), p)
        };
        Ok(Fitted {
            model,
            predictions,
            digest,
            history,
        })
    }

    fn fit_mlp(&self, kind: ModelKind) -> Result<Fitted> {
        let (preset, mut base) = match kind {
            ModelKind::ShallowFnn => (Preset::Shallow, self.config.shallow_fnn.clone()),
            _ => (Preset::Deep, self.config.deep_fnn.clone()),
        };
        base.seed = derive(self.config.seed, kind.name());
        let inner = self.inner;
        let train = |c: &MlpConfig, data: &SplitDataset| -> Result<(MlpModel, Vec<f64>)> {
            let model = mlp_init(c, data.train.n_features())?;
            let fitted = mlp_train(model, &data.train, c)?.model;
            let pred = fitted.predict(&data.test)?;
            Ok((fitted, pred))
        };
        let space = if self.config.budget.fnn_structure {
            fnn_space(preset)
        } else {
            fnn_tuning_space()
        };
        let (best, history) = self.search(
            kind,
            &space,
            self.config.budget.method,
            self.config.budget.fnn_trials,
            mlp_config_point(&base, &space),
            |p| {
                let c = mlp_config_from(p, &base)?;
                let (_, pred) = train(&c, inner)?;
                mse_of(&pred, &inner.test.targets)
            },
        )?;
        let c = mlp_config_from(&best, &base)?;
        let digest = config_digest(&(kind, &c))?;
        let (model, predictions) = train(&c, self.outer)?;
        Ok(Fitted {
            model: TrainedModel::Mlp(model),
            predictions,
            digest,
            history,
        })
    }
}

fn score_pretrained(model: &TrainedModel, test: &FeatureMatrix) -> Result<Fitted> {
    Ok(Fitted {
        predictions: model.predict(test)?,
        digest: sha256_hex(model.to_json()?.as_bytes()),
        model: model.clone(),
        history: Vec::new(),
    })
}

#[derive(Serialize)]
struct CapmConventions {
    model: ModelKind,
    beta_window_months: i64,
    risk_free_series: &'static str,
}

pub fn run_benchmark(
    prices: &PricePanel,
    fundamentals: &FundamentalsPanel,
    macro_panel: &MacroPanel,
    config: &BenchmarkConfig,
) -> Result<BenchmarkRun> {
    run_benchmark_with(prices, fundamentals, macro_panel, config, &BTreeMap::new())
}

/// As [`run_benchmark`], but models found in `pretrained` are scored on the
/// test rows as given instead of being tuned and fitted.
pub fn run_benchmark_with(
    prices: &PricePanel,
    fundamentals: &FundamentalsPanel,
    macro_panel: &MacroPanel,
    config: &BenchmarkConfig,
    pretrained: &BTreeMap<ModelKind, TrainedModel>,
) -> Result<BenchmarkRun> {
    if config.roster.is_empty() {
        return Err(Error::Config("model roster is empty".into()));
    }
    let matrix = build_feature_matrix(prices, fundamentals, macro_panel, config.window_years)?;
    log::info!(
        "feature matrix: {} rows x {} features",
        matrix.n_rows(),
        matrix.n_features()
    );
    let raw = sequential_split(&matrix, config.test_fraction)?;
    if raw.train.is_empty() || raw.test.is_empty() {
        return Err(Error::Validation(format!(
            "split left {} train and {} test rows",
            raw.train.n_rows(),
            raw.test.n_rows()
        )));
    }
    let needs_inner = config
        .roster
        .iter()
        .any(|k| *k != ModelKind::Capm && !pretrained.contains_key(k));
    let inner = if needs_inner {
        let s = sequential_split(&raw.train, config.budget.validation_fraction)?;
        if s.train.is_empty() || s.test.is_empty() {
            return Err(Error::Validation(
                "training years too few for a validation split".into(),
            ));
        }
        standardize_features(s)?
    } else {
        raw.clone()
    };
    let outer = standardize_features(raw)?;
    let test_keys = outer.test.keys.clone();
    let targets = outer.test.targets.clone();
    let metadata = ReportMetadata {
        seed: config.seed,
        test_fraction: config.test_fraction,
        window_years: config.window_years,
        data_source: config.data_source.clone(),
        config_digest: config_digest(config)?,
        n_train_rows: outer.train.n_rows(),
        n_test_rows: outer.test.n_rows(),
        test_years: outer.test.years(),
        test_keys_digest: keys_digest(&test_keys),
    };
    log::info!(
        "split: {} train rows, {} test rows (years {:?})",
        metadata.n_train_rows,
        metadata.n_test_rows,
        metadata.test_years
    );

    let ctx = Context {
        config,
        inner: &inner,
        outer: &outer,
    };
    let mut results = Vec::new();
    let mut models = Vec::new();
    let mut predictions = Vec::new();
    let mut histories = Vec::new();
    let mut capm_estimates = Vec::new();
    for &kind in &config.roster {
        let start = Instant::now();
        let fitted = match (kind, pretrained.get(&kind)) {
            (ModelKind::Capm, _) => capm_predict_all(prices, macro_panel, &test_keys).and_then(|est| {
                let p = est.iter().map(|e| e.expected_return).collect();
                capm_estimates = est;
                Ok(Fitted {
                    model: TrainedModel::Capm,
                    predictions: p,
                    digest: config_digest(&CapmConventions {
                        model: kind,
                        beta_window_months: BETA_WINDOW_MONTHS,
                        risk_free_series: RISK_FREE_SERIES,
                    })?,
                    history: Vec::new(),
                })
            }),
            (_, Some(model)) => score_pretrained(model, &outer.test),
            (ModelKind::Gbt | ModelKind::Ngboost, None) => ctx.fit_gbt(kind),
            (ModelKind::ShallowFnn | ModelKind::DeepFnn, None) => ctx.fit_mlp(kind),
        };
        let train_duration_s = start.elapsed().as_secs_f64();
        match fitted {
            Ok(f) => {
                log::info!("{}: trained in {train_duration_s:.1}s", kind.name());
                results.push(ModelResult {
                    kind,
                    predictions: Ok(f.predictions.clone()),
                    train_duration_s,
                    config_digest: f.digest,
                });
                models.push((kind, f.model));
                predictions.push((kind, f.predictions));
                histories.push((kind, f.history));
            }
            Err(e) => {
                log::error!("{}: {e}", kind.name());
                results.push(ModelResult {
                    kind,
                    predictions: Err(e.to_string()),
                    train_duration_s,
                    config_digest: String::new(),
                });
            }
        }
    }
    Ok(BenchmarkRun {
        report: assemble_report(metadata, &targets, results),
        split: outer,
        models,
        predictions,
        capm_estimates,
        histories,
    })
}
