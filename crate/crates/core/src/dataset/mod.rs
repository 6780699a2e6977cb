//! Raw panel data: monthly prices, annual fundamentals and monthly macro series.
//!
//! Months are integer indices from a fixed epoch (month 0 is January of year 0);
//! year `y` spans months `12y..12y+12`. Panels are validated on construction and
//! immutable afterwards.

mod io;
mod synth;

use std::collections::BTreeMap;

pub use io::{
    load_panels, read_fundamentals, read_macro, read_prices, write_fundamentals, write_macro, write_panels,
    write_prices,
};
pub use synth::{
    generate_synthetic, GroundTruth, SynthConfig, SynthOutput, DRIVER_FEATURES, FUNDAMENTAL_ITEMS, MACRO_SERIES,
};

use crate::{Error, Result};

/// Tolerance for the `monthly_return == price_t / price_{t-1} - 1` check.
pub const RETURN_TOLERANCE: f64 = 1e-9;

/// Calendar year containing `month`.
pub fn year_of(month: i64) -> i64 {
    month.div_euclid(12)
}

/// First month of `year`.
pub fn year_start(year: i64) -> i64 {
    year * 12
}

/// One row of `prices.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRow {
    pub asset_id: String,
    pub month: i64,
    pub price: f64,
    pub monthly_return: f64,
    pub volume: f64,
    pub shares_outstanding: f64,
}

/// Contiguous monthly history of one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetSeries {
    pub first_month: i64,
    pub price: Vec<f64>,
    pub monthly_return: Vec<f64>,
    pub volume: Vec<f64>,
    pub shares_outstanding: Vec<f64>,
}

impl AssetSeries {
    pub fn len(&self) -> usize {
        self.price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.price.is_empty()
    }

    /// One past the last month present.
    pub fn end_month(&self) -> i64 {
        self.first_month + self.price.len() as i64
    }

    pub fn contains(&self, month: i64) -> bool {
        month >= self.first_month && month < self.end_month()
    }

    fn offset(&self, month: i64) -> Option<usize> {
        self.contains(month).then(|| (month - self.first_month) as usize)
    }

    pub fn price_at(&self, month: i64) -> Option<f64> {
        self.offset(month).map(|i| self.price[i])
    }

    pub fn return_at(&self, month: i64) -> Option<f64> {
        self.offset(month).map(|i| self.monthly_return[i])
    }

    pub fn volume_at(&self, month: i64) -> Option<f64> {
        self.offset(month).map(|i| self.volume[i])
    }

    /// Market capitalisation (price times shares outstanding).
    pub fn cap_at(&self, month: i64) -> Option<f64> {
        self.offset(month).map(|i| self.price[i] * self.shares_outstanding[i])
    }

    /// Returns for `months`, or `None` if any month is missing.
    pub fn returns_in(&self, months: std::ops::Range<i64>) -> Option<&[f64]> {
        if months.start >= months.end {
            return Some(&[]);
        }
        let a = self.offset(months.start)?;
        let b = self.offset(months.end - 1)?;
        Some(&self.monthly_return[a..=b])
    }
}

/// Monthly prices keyed by asset id (sorted).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PricePanel {
    assets: BTreeMap<String, AssetSeries>,
}

impl PricePanel {
    /// Builds a panel from rows in any order, enforcing the panel invariants.
    pub fn from_rows(mut rows: Vec<PriceRow>) -> Result<Self> {
        rows.sort_by(|a, b| a.asset_id.cmp(&b.asset_id).then(a.month.cmp(&b.month)));
        let mut problems = Vec::new();
        for w in rows.windows(2) {
            if w[0].asset_id == w[1].asset_id && w[0].month == w[1].month {
                problems.push(format!("duplicate key ({}, {})", w[0].asset_id, w[0].month));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems.join("; ")));
        }
        let mut assets: BTreeMap<String, AssetSeries> = BTreeMap::new();
        for r in rows {
            if !(r.price > 0.0 && r.price.is_finite()) {
                problems.push(format!("({}, {}): price must be > 0", r.asset_id, r.month));
            }
            if !(r.shares_outstanding > 0.0 && r.shares_outstanding.is_finite()) {
                problems.push(format!("({}, {}): shares_outstanding must be > 0", r.asset_id, r.month));
            }
            if !(r.volume >= 0.0 && r.volume.is_finite()) {
                problems.push(format!("({}, {}): volume must be >= 0", r.asset_id, r.month));
            }
            if !r.monthly_return.is_finite() {
                problems.push(format!("({}, {}): monthly_return must be finite", r.asset_id, r.month));
            }
            match assets.get_mut(&r.asset_id) {
                Some(s) => {
                    if r.month != s.end_month() {
                        problems.push(format!(
                            "asset {}: gap between month {} and month {}",
                            r.asset_id,
                            s.end_month() - 1,
                            r.month
                        ));
                        continue;
                    }
                    let prev = *s.price.last().expect("series is non-empty");
                    let implied = r.price / prev - 1.0;
                    if (implied - r.monthly_return).abs() > RETURN_TOLERANCE {
                        problems.push(format!(
                            "({}, {}): monthly_return {} disagrees with price ratio {}",
                            r.asset_id, r.month, r.monthly_return, implied
                        ));
                    }
                    s.price.push(r.price);
                    s.monthly_return.push(r.monthly_return);
                    s.volume.push(r.volume);
                    s.shares_outstanding.push(r.shares_outstanding);
                }
                None => {
                    assets.insert(
                        r.asset_id,
                        AssetSeries {
                            first_month: r.month,
                            price: vec![r.price],
                            monthly_return: vec![r.monthly_return],
                            volume: vec![r.volume],
                            shares_outstanding: vec![r.shares_outstanding],
                        },
                    );
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems.join("; ")));
        }
        Ok(Self { assets })
    }

    pub fn asset(&self, id: &str) -> Option<&AssetSeries> {
        self.assets.get(id)
    }

    pub fn assets(&self) -> impl Iterator<Item = (&str, &AssetSeries)> {
        self.assets.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn asset_ids(&self) -> Vec<&str> {
        self.assets.keys().map(String::as_str).collect()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_rows(&self) -> usize {
        self.assets.values().map(AssetSeries::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    /// Earliest and one-past-latest month across all assets.
    pub fn month_span(&self) -> Option<(i64, i64)> {
        let lo = self.assets.values().map(|s| s.first_month).min()?;
        let hi = self.assets.values().map(AssetSeries::end_month).max()?;
        Some((lo, hi))
    }

    /// Rows in (asset_id, month) order.
    pub fn rows(&self) -> impl Iterator<Item = PriceRow> + '_ {
        self.assets.iter().flat_map(|(id, s)| {
            (0..s.len()).map(move |i| PriceRow {
                asset_id: id.clone(),
                month: s.first_month + i as i64,
                price: s.price[i],
                monthly_return: s.monthly_return[i],
                volume: s.volume[i],
                shares_outstanding: s.shares_outstanding[i],
            })
        })
    }
}

/// Annual accounting line items keyed by (asset_id, fiscal_year).
///
/// Fiscal year `y` is treated as known at the end of calendar year `y`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FundamentalsPanel {
    items: Vec<String>,
    rows: BTreeMap<(String, i64), Vec<Option<f64>>>,
}

impl FundamentalsPanel {
    pub fn new(items: Vec<String>) -> Self {
        Self {
            items,
            rows: BTreeMap::new(),
        }
    }

    /// Builds a panel from `(asset_id, fiscal_year, values)` rows.
    pub fn from_rows(items: Vec<String>, rows: Vec<(String, i64, Vec<Option<f64>>)>) -> Result<Self> {
        let mut panel = Self::new(items);
        let mut problems = Vec::new();
        for (asset, year, values) in rows {
            if values.len() != panel.items.len() {
                problems.push(format!(
                    "({asset}, {year}): {} values for {} items",
                    values.len(),
                    panel.items.len()
                ));
                continue;
            }
            if values.iter().flatten().any(|v| !v.is_finite()) {
                problems.push(format!("({asset}, {year}): non-finite value"));
                continue;
            }
            let key = (asset, year);
            if panel.rows.contains_key(&key) {
                problems.push(format!("duplicate key ({}, {})", key.0, key.1));
                continue;
            }
            panel.rows.insert(key, values);
        }
        if problems.is_empty() {
            Ok(panel)
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn item_index(&self, name: &str) -> Option<usize> {
        self.items.iter().position(|i| i == name)
    }

    pub fn get(&self, asset_id: &str, fiscal_year: i64) -> Option<&[Option<f64>]> {
        self.rows.get(&(asset_id.to_string(), fiscal_year)).map(Vec::as_slice)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, i64, &[Option<f64>])> {
        self.rows.iter().map(|((a, y), v)| (a.as_str(), *y, v.as_slice()))
    }
}

/// Monthly macroeconomic series on a contiguous month range.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MacroPanel {
    series: Vec<String>,
    first_month: i64,
    values: Vec<Vec<f64>>,
}

impl MacroPanel {
    /// Builds a panel from `(month, values)` rows in any order.
    pub fn from_rows(series: Vec<String>, mut rows: Vec<(i64, Vec<f64>)>) -> Result<Self> {
        rows.sort_by_key(|r| r.0);
        let mut problems = Vec::new();
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                problems.push(format!("duplicate month {}", w[0].0));
            } else if w[1].0 != w[0].0 + 1 {
                problems.push(format!("months not contiguous: {} -> {}", w[0].0, w[1].0));
            }
        }
        for (m, v) in &rows {
            if v.len() != series.len() {
                problems.push(format!("month {m}: {} values for {} series", v.len(), series.len()));
            } else if v.iter().any(|x| !x.is_finite()) {
                problems.push(format!("month {m}: non-finite value"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems.join("; ")));
        }
        let first_month = rows.first().map_or(0, |r| r.0);
        Ok(Self {
            series,
            first_month,
            values: rows.into_iter().map(|r| r.1).collect(),
        })
    }

    pub fn series(&self) -> &[String] {
        &self.series
    }

    pub fn series_index(&self, name: &str) -> Option<usize> {
        self.series.iter().position(|s| s == name)
    }

    pub fn first_month(&self) -> i64 {
        self.first_month
    }

    pub fn end_month(&self) -> i64 {
        self.first_month + self.values.len() as i64
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, month: i64, series: usize) -> Option<f64> {
        if month < self.first_month || month >= self.end_month() {
            return None;
        }
        self.values[(month - self.first_month) as usize].get(series).copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = (i64, &[f64])> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (self.first_month + i as i64, v.as_slice()))
    }
}
