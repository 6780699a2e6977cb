//! CAPM expected returns and the valuation formulas that consume them.
//!
//! Conventions:
//! - the market portfolio is the value-weighted index of the loaded universe,
//!   weights taken from the previous month's market capitalisation;
//! - beta uses the 36 monthly returns strictly before the target year, as
//!   population covariance over population variance;
//! - the expected market return is 12 times the arithmetic mean monthly
//!   return over the same window;
//! - the risk-free rate is the arithmetic mean of the `treasury_10y_yield`
//!   series (an annual fraction) over the same window.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataset::{year_start, MacroPanel, PricePanel};
use crate::features::RowKey;
use crate::{par, Error, Result};

/// Months in the beta / averaging window.
pub const BETA_WINDOW_MONTHS: i64 = 36;

pub const RISK_FREE_SERIES: &str = "treasury_10y_yield";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapmEstimate {
    pub asset_id: String,
    pub target_year: i64,
    pub beta: f64,
    pub rf_annual: f64,
    pub market_return_annual: f64,
    pub expected_return: f64,
}

impl CapmEstimate {
    pub fn new(asset_id: String, target_year: i64, beta: f64, rf_annual: f64, market_return_annual: f64) -> Self {
        Self {
            asset_id,
            target_year,
            beta,
            rf_annual,
            market_return_annual,
            expected_return: capm_expected_return(rf_annual, beta, market_return_annual),
        }
    }

    pub fn market_premium(&self) -> f64 {
        self.market_return_annual - self.rf_annual
    }
}

/// `rf + beta * (E[r_M] - rf)`.
pub fn capm_expected_return(rf: f64, beta: f64, market_return: f64) -> f64 {
    rf + beta * (market_return - rf)
}

/// Paired asset and market return series for one beta estimate.
#[derive(Debug, Clone, Copy)]
pub struct BetaInputs<'a> {
    pub asset: &'a [f64],
    pub market: &'a [f64],
}

impl<'a> BetaInputs<'a> {
    pub fn new(asset: &'a [f64], market: &'a [f64]) -> Result<Self> {
        if asset.len() != market.len() {
            return Err(Error::DimensionMismatch {
                expected: market.len(),
                actual: asset.len(),
            });
        }
        if asset.len() < 2 {
            return Err(Error::Validation("beta needs at least two observations".into()));
        }
        Ok(Self { asset, market })
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population covariance (divides by `n`).
fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64
}

/// `cov(asset, market) / var(market)`.
pub fn estimate_beta(inputs: BetaInputs<'_>) -> Result<f64> {
    let var = covariance(inputs.market, inputs.market);
    let scale = inputs.market.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if !(var > (1e-12 * scale).powi(2)) {
        return Err(Error::Numerical("market variance is zero".into()));
    }
    Ok(covariance(inputs.asset, inputs.market) / var)
}

/// 12 times the arithmetic mean monthly return.
pub fn annualize_arithmetic(monthly: &[f64]) -> Result<f64> {
    if monthly.is_empty() {
        return Err(Error::Validation("cannot annualize an empty series".into()));
    }
    Ok(12.0 * mean(monthly))
}

/// Value-weighted market return for each month in `months`.
pub fn vw_market_index(prices: &PricePanel, months: Range<i64>) -> Result<Vec<f64>> {
    if prices.is_empty() {
        return Err(Error::Validation("price panel is empty".into()));
    }
    months
        .map(|t| {
            let mut cap_total = 0.0;
            let mut weighted = 0.0;
            for (_, s) in prices.assets() {
                if let (Some(cap), Some(r)) = (s.cap_at(t - 1), s.return_at(t)) {
                    cap_total += cap;
                    weighted += cap * r;
                }
            }
            if cap_total > 0.0 {
                Ok(weighted / cap_total)
            } else {
                Err(Error::Validation(format!(
                    "month {t}: total market capitalisation is zero"
                )))
            }
        })
        .collect()
}

/// Value-weighted index over the full span of a panel, computed once and
/// shared across many CAPM predictions.
#[derive(Debug, Clone)]
pub struct MarketIndex {
    first_month: i64,
    returns: Vec<Option<f64>>,
}

impl MarketIndex {
    pub fn from_prices(prices: &PricePanel) -> Result<Self> {
        let (lo, hi) = prices
            .month_span()
            .ok_or_else(|| Error::Validation("price panel is empty".into()))?;
        let returns = (lo..hi)
            .map(|t| vw_market_index(prices, t..t + 1).ok().map(|v| v[0]))
            .collect();
        Ok(Self {
            first_month: lo,
            returns,
        })
    }

    pub fn window(&self, months: Range<i64>) -> Option<Vec<f64>> {
        months
            .map(|t| {
                let i = usize::try_from(t - self.first_month).ok()?;
                self.returns.get(i).copied().flatten()
            })
            .collect()
    }
}

/// CAPM estimate for one asset and target year using the trailing window.
pub fn capm_predict(
    prices: &PricePanel,
    macro_panel: &MacroPanel,
    asset_id: &str,
    target_year: i64,
) -> Result<CapmEstimate> {
    let index = MarketIndex::from_prices(prices)?;
    capm_predict_with_index(prices, macro_panel, &index, asset_id, target_year)
}

fn window_for(target_year: i64) -> Range<i64> {
    let start = year_start(target_year);
    start - BETA_WINDOW_MONTHS..start
}

pub fn capm_predict_with_index(
    prices: &PricePanel,
    macro_panel: &MacroPanel,
    index: &MarketIndex,
    asset_id: &str,
    target_year: i64,
) -> Result<CapmEstimate> {
    let rf_idx = macro_panel
        .series_index(RISK_FREE_SERIES)
        .ok_or_else(|| Error::Validation(format!("macro panel lacks `{RISK_FREE_SERIES}`")))?;
    let series = prices
        .asset(asset_id)
        .ok_or_else(|| Error::Validation(format!("unknown asset `{asset_id}`")))?;
    let window = window_for(target_year);
    let usable = |year: i64| -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let w = window_for(year);
        let asset = series.returns_in(w.clone())?.to_vec();
        let market = index.window(w.clone())?;
        let mut rf = 0.0;
        for m in w {
            rf += macro_panel.value(m, rf_idx)?;
        }
        Some((asset, market, rf / BETA_WINDOW_MONTHS as f64))
    };
    let Some((asset, market, rf_annual)) = usable(target_year) else {
        let last_year = series.end_month().div_euclid(12) + 1;
        let first_ok = (series.first_month.div_euclid(12)..=last_year).find(|&y| usable(y).is_some());
        return Err(Error::InsufficientHistory(match first_ok {
            Some(y) => format!(
                "asset {asset_id}: target year {target_year} lacks 36 months of returns, market index and risk-free data (months {}..{}); first usable year is {y}",
                window.start, window.end
            ),
            None => format!("asset {asset_id}: no target year has a complete 36-month window"),
        }));
    };
    let beta = estimate_beta(BetaInputs::new(&asset, &market)?)?;
    let market_return_annual = annualize_arithmetic(&market)?;
    Ok(CapmEstimate::new(
        asset_id.to_string(),
        target_year,
        beta,
        rf_annual,
        market_return_annual,
    ))
}

/// CAPM estimates for many (asset, year) keys, in key order.
pub fn capm_predict_all(prices: &PricePanel, macro_panel: &MacroPanel, keys: &[RowKey]) -> Result<Vec<CapmEstimate>> {
    let index = MarketIndex::from_prices(prices)?;
    par::map_slice(keys, |k| {
        capm_predict_with_index(prices, macro_panel, &index, &k.asset_id, k.target_year)
    })
    .into_iter()
    .collect()
}

/// Writes `capm_predictions.csv`.
pub fn write_capm_csv<W: std::io::Write>(estimates: &[CapmEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "asset_id",
        "target_year",
        "beta",
        "rf_annual",
        "market_return_annual",
        "expected_return",
    ])?;
    for e in estimates {
        w.write_record([
            e.asset_id.clone(),
            e.target_year.to_string(),
            e.beta.to_string(),
            e.rf_annual.to_string(),
            e.market_return_annual.to_string(),
            e.expected_return.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Inputs to the pre-tax weighted average cost of capital.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaccInputs {
    #[serde(rename = "D")]
    pub debt_value: f64,
    #[serde(rename = "E")]
    pub equity_value: f64,
    #[serde(rename = "rD")]
    pub cost_of_debt: f64,
    #[serde(rename = "rE")]
    pub cost_of_equity: f64,
}

/// `D/V * r_D + E/V * r_E` with `V = D + E`.
pub fn wacc(inputs: &WaccInputs) -> Result<f64> {
    let WaccInputs {
        debt_value: d,
        equity_value: e,
        cost_of_debt: rd,
        cost_of_equity: re,
    } = *inputs;
    if d < 0.0 || e < 0.0 {
        return Err(Error::Validation("debt and equity values must be non-negative".into()));
    }
    let v = d + e;
    if !(v > 0.0) {
        return Err(Error::Validation("firm value D + E must be positive".into()));
    }
    Ok(d / v * rd + e / v * re)
}

/// Discounted cash flow inputs: `fcf[t]` for `t = 0..=n`, a terminal value
/// discounted at `n + 1`, and the discount rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcfInputs {
    pub fcf: Vec<f64>,
    #[serde(default)]
    pub terminal_value: f64,
    #[serde(alias = "r")]
    pub discount_rate: f64,
}

/// `sum_t FCF_t / (1+r)^t + TV / (1+r)^(n+1)`.
pub fn dcf_value(inputs: &DcfInputs) -> Result<f64> {
    let r = inputs.discount_rate;
    if !(r > -1.0) {
        return Err(Error::Validation("discount rate must exceed -1".into()));
    }
    let growth = 1.0 + r;
    let mut factor = 1.0;
    let mut value = 0.0;
    for cf in &inputs.fcf {
        value += cf / factor;
        factor *= growth;
    }
    Ok(value + inputs.terminal_value / factor)
}
