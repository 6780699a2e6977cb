//! Scoring and the model comparison report.

mod benchmark;

pub use benchmark::{run_benchmark, run_benchmark_with, BenchmarkConfig, BenchmarkRun, HpoBudget, TrainedModel};

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::features::RowKey;
use crate::{Error, Result};

/// Predictions paired with the values they are scored against.
#[derive(Debug, Clone, Copy)]
pub struct EvalPair<'a> {
    predictions: &'a [f64],
    actuals: &'a [f64],
}

impl<'a> EvalPair<'a> {
    pub fn new(predictions: &'a [f64], actuals: &'a [f64]) -> Result<Self> {
        if predictions.len() != actuals.len() {
            return Err(Error::DimensionMismatch {
                expected: actuals.len(),
                actual: predictions.len(),
            });
        }
        if actuals.is_empty() {
            return Err(Error::Validation("cannot score zero predictions".into()));
        }
        if let Some(i) = predictions.iter().chain(actuals).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("evaluation value at position {i}")));
        }
        Ok(Self { predictions, actuals })
    }

    pub fn len(&self) -> usize {
        self.actuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actuals.is_empty()
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Mean squared error.
///
/// Differences and squares are split into exact double-double terms, which
/// are sorted and summed with compensation, so the result is nearly correctly
/// rounded and does not depend on the order of the pairs.
pub fn mse(pair: &EvalPair<'_>) -> f64 {
    let mut terms = Vec::with_capacity(4 * pair.len());
    for (p, a) in pair.predictions.iter().zip(pair.actuals) {
        let (d, e) = two_sum(*p, -*a);
        let sq = d * d;
        terms.push(sq);
        terms.push(d.mul_add(d, -sq));
        terms.push(2.0 * d * e);
        terms.push(e * e);
    }
    terms.sort_by(f64::total_cmp);
    let (mut hi, mut lo) = (0.0, 0.0);
    for t in terms {
        let (s, e) = two_sum(hi, t);
        hi = s;
        lo += e;
    }
    let (hi, lo) = two_sum(hi, lo);
    let n = pair.len() as f64;
    let q = hi / n;
    let r = (-q).mul_add(n, hi) + lo;
    q + r / n
}

/// Convenience wrapper validating and scoring two slices.
pub fn mse_of(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    Ok(mse(&EvalPair::new(predictions, actuals)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Capm,
    Gbt,
    Ngboost,
    ShallowFnn,
    DeepFnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Capm,
        ModelKind::Gbt,
        ModelKind::Ngboost,
        ModelKind::ShallowFnn,
        ModelKind::DeepFnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Capm => "capm",
            ModelKind::Gbt => "gbt",
            ModelKind::Ngboost => "ngboost",
            ModelKind::ShallowFnn => "shallow_fnn",
            ModelKind::DeepFnn => "deep_fnn",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Capm => "CAPM",
            ModelKind::Gbt => "GBT (XGBoost-analog)",
            ModelKind::Ngboost => "NGBoost",
            ModelKind::ShallowFnn => "Shallow FNN",
            ModelKind::DeepFnn => "Deep FNN",
        }
    }

    /// Parses a comma-separated roster such as `capm,gbt,deep_fnn`.
    pub fn parse_roster(s: &str) -> Result<Vec<ModelKind>> {
        let mut out: Vec<ModelKind> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let k: ModelKind = part.parse()?;
            if !out.contains(&k) {
                out.push(k);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("model roster is empty".into()));
        }
        Ok(out)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub label: String,
    pub status: RowStatus,
    pub test_mse: Option<f64>,
    pub n_test_rows: usize,
    pub train_duration_s: f64,
    pub config_digest: String,
    pub test_keys_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub test_fraction: f64,
    pub window_years: usize,
    pub data_source: String,
    pub config_digest: String,
    pub n_train_rows: usize,
    pub n_test_rows: usize,
    pub test_years: Vec<i64>,
    pub test_keys_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ModelRow>,
}

/// Outcome of one model before scoring.
#[derive(Debug, Clone)]
pub struct ModelResult {
    pub kind: ModelKind,
    pub predictions: Result<Vec<f64>, String>,
    pub train_duration_s: f64,
    pub config_digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Digest of an ordered key list.
pub fn keys_digest(keys: &[RowKey]) -> String {
    let mut buf = String::new();
    for k in keys {
        let _ = writeln!(buf, "{},{}", k.asset_id, k.target_year);
    }
    sha256_hex(buf.as_bytes())
}

pub fn config_digest<T: Serialize>(config: &T) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(config)?.as_bytes()))
}

/// Scores every result against the same test targets.
pub fn assemble_report(metadata: ReportMetadata, targets: &[f64], results: Vec<ModelResult>) -> BenchmarkReport {
    let rows = results
        .into_iter()
        .map(|r| {
            let scored = r
                .predictions
                .and_then(|p| mse_of(&p, targets).map_err(|e| e.to_string()));
            let (status, test_mse, error) = match scored {
                Ok(v) => (RowStatus::Ok, Some(v), None),
                Err(e) => (RowStatus::Failed, None, Some(e)),
            };
            ModelRow {
                model: r.kind.name().to_string(),
                label: r.kind.label().to_string(),
                status,
                test_mse,
                n_test_rows: targets.len(),
                train_duration_s: r.train_duration_s,
                config_digest: r.config_digest,
                test_keys_digest: metadata.test_keys_digest.clone(),
                error,
            }
        })
        .collect();
    BenchmarkReport { metadata, rows }
}

impl BenchmarkReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.status == RowStatus::Ok)
    }

    pub fn row(&self, kind: ModelKind) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.model == kind.name())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// `model,test_mse,n_test_rows`; failed models have an empty score.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "test_mse", "n_test_rows"])?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.test_mse.map(|v| v.to_string()).unwrap_or_default(),
                r.n_test_rows.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("report.csv"), self.to_csv()?)?;
        Ok(())
    }

    /// Two-column text table with scores to four decimals.
    pub fn render_table(&self) -> String {
        let rows: Vec<(String, String)> = self
            .rows
            .iter()
            .map(|r| {
                let score = match r.test_mse {
                    Some(v) => format!("{v:.4}"),
                    None => "failed".to_string(),
                };
                (r.label.clone(), score)
            })
            .collect();
        let head = ("Model", "Test MSE");
        let w = rows.iter().map(|r| r.0.len()).chain([head.0.len()]).max().unwrap_or(0);
        let mut out = format!("{:<w$} | {}\n", head.0, head.1);
        let _ = writeln!(out, "{}-+-{}", "-".repeat(w), "-".repeat(head.1.len()));
        for (label, score) in rows {
            let _ = writeln!(out, "{label:<w$} | {score}");
        }
        out
    }
}
