//! Supervised dataset construction: one row per (asset, target year) with
//! lagged features from the `window_years` calendar years before the target
//! year and the compounded return of the target year as label.
//!
//! Per lag year `L = Y - k` (`k = 1..=window_years`) the recipe emits, in order:
//! compounded annual return, mean monthly volume, year-end price, every
//! fundamentals line item of fiscal year `L`, the ratios in [`RATIOS`] whose
//! inputs exist, and for every macro series its mean level over `L` and its
//! change from January to December of `L`. With the synthetic schema this is
//! 66 features per lag, 198 for a three-year window.
//!
//! Fiscal year `L` is taken as known at the end of calendar year `L`.

mod audit;
mod io;
mod split;

use serde::{Deserialize, Serialize};

pub use audit::{audit_leakage, AuditReport};
pub use io::{read_features_csv, write_features_csv};
pub use split::{sequential_split, standardize_features, SplitDataset, Standardizer};

use crate::dataset::{year_start, FundamentalsPanel, MacroPanel, PricePanel};
use crate::{par, Error, Result};

/// Ratio features: name, numerator item, denominator item.
pub const RATIOS: [(&str, &str, &str); 9] = [
    ("roa", "net_income", "total_assets"),
    ("roe", "net_income", "total_equity"),
    ("debt_to_equity", "total_debt", "total_equity"),
    ("debt_to_assets", "total_debt", "total_assets"),
    ("gross_margin", "gross_profit", "revenue"),
    ("operating_margin", "ebit", "revenue"),
    ("net_margin", "net_income", "revenue"),
    ("asset_turnover", "revenue", "total_assets"),
    ("capex_to_revenue", "capex", "revenue"),
];

/// Identifies a row of a [`FeatureMatrix`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub asset_id: String,
    pub target_year: i64,
}

/// Dense row-major feature matrix with targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub window_years: usize,
    pub keys: Vec<RowKey>,
    /// Row-major, `keys.len() * feature_names.len()` values.
    pub x: Vec<f64>,
    pub targets: Vec<f64>,
    pub dropped_missing: usize,
    /// Assets with no target year that has a full window of history.
    pub insufficient_history: usize,
}

impl FeatureMatrix {
    pub fn empty(feature_names: Vec<String>, window_years: usize) -> Self {
        Self {
            feature_names,
            window_years,
            keys: Vec::new(),
            x: Vec::new(),
            targets: Vec::new(),
            dropped_missing: 0,
            insufficient_history: 0,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.x[i * d..(i + 1) * d]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Distinct target years in ascending order.
    pub fn years(&self) -> Vec<i64> {
        let mut y: Vec<i64> = self.keys.iter().map(|k| k.target_year).collect();
        y.sort_unstable();
        y.dedup();
        y
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let d = self.n_features();
        let mut x = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            x.extend_from_slice(self.row(r));
        }
        Self {
            feature_names: self.feature_names.clone(),
            window_years: self.window_years,
            keys: rows.iter().map(|&r| self.keys[r].clone()).collect(),
            x,
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
            dropped_missing: 0,
            insufficient_history: 0,
        }
    }

    /// Feature values as a column, for one feature.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    AnnualReturn,
    MeanVolume,
    YearEndPrice,
    Item(usize),
    Ratio { num: usize, den: usize },
    MacroLevel(usize),
    MacroChange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct FeatureSpec {
    lag: usize,
    kind: Kind,
}

/// Ordered feature definitions derived from the panel schemas.
#[derive(Debug, Clone)]
pub struct FeatureRecipe {
    window_years: usize,
    specs: Vec<FeatureSpec>,
    names: Vec<String>,
}

impl FeatureRecipe {
    pub fn new(fundamentals: &FundamentalsPanel, macro_panel: &MacroPanel, window_years: usize) -> Self {
        let mut per_lag: Vec<(Kind, String)> = vec![
            (Kind::AnnualReturn, "annual_return".into()),
            (Kind::MeanVolume, "mean_volume".into()),
            (Kind::YearEndPrice, "year_end_price".into()),
        ];
        for (i, item) in fundamentals.items().iter().enumerate() {
            per_lag.push((Kind::Item(i), item.clone()));
        }
        for (name, num, den) in RATIOS {
            if let (Some(num), Some(den)) = (fundamentals.item_index(num), fundamentals.item_index(den)) {
                per_lag.push((Kind::Ratio { num, den }, name.to_string()));
            }
        }
        for (i, s) in macro_panel.series().iter().enumerate() {
            per_lag.push((Kind::MacroLevel(i), format!("{s}_level")));
            per_lag.push((Kind::MacroChange(i), format!("{s}_change")));
        }
        let mut specs = Vec::new();
        let mut names = Vec::new();
        for lag in 1..=window_years {
            for (kind, name) in &per_lag {
                specs.push(FeatureSpec { lag, kind: *kind });
                names.push(format!("lag{lag}_{name}"));
            }
        }
        Self {
            window_years,
            specs,
            names,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn window_years(&self) -> usize {
        self.window_years
    }
}

/// Read access to the raw panels, optionally refusing anything at or after
/// `cutoff` (an exclusive month bound).
#[derive(Clone, Copy)]
pub(crate) struct PanelView<'a> {
    pub prices: &'a PricePanel,
    pub fundamentals: &'a FundamentalsPanel,
    pub macro_panel: &'a MacroPanel,
    pub cutoff: Option<i64>,
}

impl<'a> PanelView<'a> {
    fn visible(&self, month: i64) -> bool {
        self.cutoff.is_none_or(|c| month < c)
    }

    fn returns(&self, asset: &str, year: i64) -> Option<&'a [f64]> {
        let start = year_start(year);
        if !self.visible(start + 11) {
            return None;
        }
        self.prices.asset(asset)?.returns_in(start..start + 12)
    }

    fn price(&self, asset: &str, month: i64) -> Option<f64> {
        self.visible(month).then(|| self.prices.asset(asset)?.price_at(month))?
    }

    fn volume(&self, asset: &str, month: i64) -> Option<f64> {
        self.visible(month)
            .then(|| self.prices.asset(asset)?.volume_at(month))?
    }

    fn fundamentals(&self, asset: &str, fiscal_year: i64) -> Option<&'a [Option<f64>]> {
        // A fiscal year becomes known at its final month.
        if !self.visible(year_start(fiscal_year) + 11) {
            return None;
        }
        self.fundamentals.get(asset, fiscal_year)
    }

    fn macro_value(&self, month: i64, series: usize) -> Option<f64> {
        self.visible(month).then(|| self.macro_panel.value(month, series))?
    }
}

/// Compounded return over a slice of monthly returns.
pub fn compound(returns: &[f64]) -> f64 {
    returns.iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Feature vector for one (asset, target year), or `None` if any input is missing.
pub(crate) fn compute_features(
    view: &PanelView<'_>,
    recipe: &FeatureRecipe,
    asset: &str,
    target_year: i64,
) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(recipe.specs.len());
    for spec in &recipe.specs {
        let year = target_year - spec.lag as i64;
        let start = year_start(year);
        let v = match spec.kind {
            Kind::AnnualReturn => compound(view.returns(asset, year)?),
            Kind::MeanVolume => {
                let mut s = 0.0;
                for m in start..start + 12 {
                    s += view.volume(asset, m)?;
                }
                s / 12.0
            }
            Kind::YearEndPrice => view.price(asset, start + 11)?,
            Kind::Item(i) => view.fundamentals(asset, year)?[i]?,
            Kind::Ratio { num, den } => {
                let row = view.fundamentals(asset, year)?;
                row[num]? / row[den]?
            }
            Kind::MacroLevel(s) => {
                let mut acc = 0.0;
                for m in start..start + 12 {
                    acc += view.macro_value(m, s)?;
                }
                acc / 12.0
            }
            Kind::MacroChange(s) => view.macro_value(start + 11, s)? - view.macro_value(start, s)?,
        };
        out.push(finite(v)?);
    }
    Some(out)
}

/// Builds the feature matrix from validated panels.
///
/// Rows are sorted by asset id, then target year. Rows with any missing
/// input are dropped and counted in `dropped_missing`.
pub fn build_feature_matrix(
    prices: &PricePanel,
    fundamentals: &FundamentalsPanel,
    macro_panel: &MacroPanel,
    window_years: usize,
) -> Result<FeatureMatrix> {
    if window_years == 0 {
        return Err(Error::Config("window_years must be at least 1".into()));
    }
    if prices.is_empty() || fundamentals.is_empty() || macro_panel.is_empty() {
        return Err(Error::Validation("cannot build features from empty panels".into()));
    }
    let recipe = FeatureRecipe::new(fundamentals, macro_panel, window_years);
    let view = PanelView {
        prices,
        fundamentals,
        macro_panel,
        cutoff: None,
    };
    let assets: Vec<&str> = prices.asset_ids();
    let per_asset = par::map_slice(&assets, |&asset| {
        let series = prices.asset(asset).expect("asset exists");
        // Full calendar years covered by the price history.
        let first_year = (series.first_month + 11).div_euclid(12);
        let last_year = (series.end_month()).div_euclid(12) - 1;
        let mut rows = Vec::new();
        let mut dropped = 0usize;
        let first_target = first_year + window_years as i64;
        if first_target > last_year {
            return (rows, dropped, true);
        }
        for year in first_target..=last_year {
            let start = year_start(year);
            let target = match series.returns_in(start..start + 12) {
                Some(r) => compound(r),
                None => {
                    dropped += 1;
                    continue;
                }
            };
            match compute_features(&view, &recipe, asset, year) {
                Some(f) if target.is_finite() => rows.push((year, f, target)),
                _ => dropped += 1,
            }
        }
        (rows, dropped, false)
    });

    let mut m = FeatureMatrix::empty(recipe.names().to_vec(), window_years);
    for (asset, (rows, dropped, short)) in assets.iter().zip(per_asset) {
        m.dropped_missing += dropped;
        m.insufficient_history += usize::from(short);
        for (year, f, target) in rows {
            m.keys.push(RowKey {
                asset_id: asset.to_string(),
                target_year: year,
            });
            m.x.extend_from_slice(&f);
            m.targets.push(target);
        }
    }
    if m.insufficient_history > 0 {
        log::warn!(
            "{} assets have less than {} years of history before any target year",
            m.insufficient_history,
            window_years
        );
    }
    if m.dropped_missing > 0 {
        log::info!("dropped {} rows with missing inputs", m.dropped_missing);
    }
    Ok(m)
}
