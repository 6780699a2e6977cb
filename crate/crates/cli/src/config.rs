//! Run configuration: an optional JSON file overlaid by command-line flags.

use std::path::Path;

use anyhow::{Context, Result};
use capmbench::dataset::SynthConfig;
use capmbench::evaluate::{BenchmarkConfig, ModelKind};
use capmbench::hpo::Method;
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synth: SynthConfig,
    pub benchmark: BenchmarkConfig,
    pub top_k: usize,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            benchmark: BenchmarkConfig::default(),
            top_k: 10,
        }
    }
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let overlay: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut merged = serde_json::to_value(Self::default())?;
        merge(&mut merged, overlay);
        serde_json::from_value(merged).with_context(|| format!("invalid configuration in {}", path.display()))
    }
}

/// Recursively overlays `patch` on `base`; objects merge key by key, any
/// other value replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Share of the most recent years held out for testing.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub window_years: Option<usize>,
    /// Comma-separated roster, e.g. `capm,gbt,deep_fnn`.
    #[arg(long)]
    pub models: Option<String>,
    /// Search method: tpe, random or grid.
    #[arg(long)]
    pub method: Option<Method>,
    /// Search trials for GBT and each network.
    #[arg(long)]
    pub trials: Option<usize>,
}

impl PipelineArgs {
    pub fn apply(&self, base: &BenchmarkConfig, data_source: &str) -> Result<BenchmarkConfig> {
        let mut cfg = base.clone();
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.test_fraction {
            cfg.test_fraction = v;
        }
        if let Some(v) = self.window_years {
            cfg.window_years = v;
        }
        if let Some(v) = &self.models {
            cfg.roster = ModelKind::parse_roster(v)?;
        }
        if let Some(v) = self.method {
            cfg.budget.method = v;
        }
        if let Some(v) = self.trials {
            cfg.budget.gbt_trials = v;
            cfg.budget.fnn_trials = v;
        }
        cfg.data_source = data_source.to_string();
        Ok(cfg)
    }
}
