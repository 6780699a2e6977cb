//! Seeded synthetic panels with a known return-generating process.
//!
//! Monthly return of asset `i` in month `t` of year `y`:
//!
//! ```text
//! r[i,t] = rf/12 + beta[i] * m[t] + G[i,y]/12 + noise_scale * 0.03 * e[i,t]
//! m[t]   = 0.004 + 0.01 * sin(2*pi*(t mod 12)/12) + noise_scale * 0.02 * z[t]
//! G[i,y] = A * ( s(roa) + l(d/e) * (1 + clamp((u - 0.06)/0.01, -2, 2)) )
//! s(roa) = tanh((roa - 0.05)/0.015)
//! l(d/e) = tanh((d/e - 1)/0.2)
//! ```
//!
//! `m` is the market excess return, `roa = net_income / total_assets` and
//! `d/e = total_debt / total_equity` come from fiscal year `y-1`, and `u` is
//! the mean unemployment rate over year `y-1`. The seasonal term averages to
//! zero over any whole number of years, so with `noise_scale = 0` the market
//! premium over every trailing window is exactly `12 * 0.004`.
//!
//! Market-cap weights are held at fixed per-asset values (shares outstanding
//! absorb price moves) and betas are rescaled so their cap-weighted mean is
//! one. The value-weighted index of the universe therefore equals
//! `rf/12 + m[t]` plus the cap-weighted idiosyncratic terms, and in a
//! noise-free, linear world every asset's regression beta against the index
//! equals its configured beta.
//!
//! Fundamentals follow annual AR(1) latent states; macro series are monthly
//! AR(1) processes around fixed means. The 10-year yield is centred on
//! `rf_annual` with deviations scaled by `noise_scale`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FundamentalsPanel, MacroPanel, PricePanel, PriceRow};
use crate::rng::{derive, seeded, Rng};
use crate::{Error, Result};

pub const FUNDAMENTAL_ITEMS: [&str; 36] = [
    "revenue",
    "cost_of_revenue",
    "gross_profit",
    "sga_expense",
    "rnd_expense",
    "depreciation",
    "ebitda",
    "ebit",
    "interest_expense",
    "pretax_income",
    "income_tax",
    "net_income",
    "total_assets",
    "current_assets",
    "cash",
    "receivables",
    "inventory",
    "ppe",
    "goodwill",
    "intangibles",
    "total_liabilities",
    "current_liabilities",
    "accounts_payable",
    "short_term_debt",
    "long_term_debt",
    "total_debt",
    "total_equity",
    "retained_earnings",
    "operating_cash_flow",
    "capex",
    "free_cash_flow",
    "dividends_paid",
    "share_repurchases",
    "working_capital",
    "employees",
    "diluted_shares",
];

/// Items the nonlinear return component reads; never blanked by `missing_rate`.
const DRIVER_ITEMS: [&str; 4] = ["net_income", "total_assets", "total_debt", "total_equity"];

/// Macro series: name, long-run mean, stationary standard deviation.
pub const MACRO_SERIES: [(&str, f64, f64); 9] = [
    ("cpi", 2.5, 1.0),
    ("gdp", 2.0, 1.5),
    ("treasury_10y_yield", f64::NAN, 0.01),
    ("wholesale_price_index", 100.0, 5.0),
    ("industrial_price_index", 100.0, 5.0),
    ("unemployment", 0.06, 0.01),
    ("fed_funds_rate", 0.03, 0.01),
    ("industrial_production", 100.0, 4.0),
    ("consumer_sentiment", 85.0, 8.0),
];

const MACRO_PERSISTENCE: f64 = 0.95;
const LATENT_PERSISTENCE: f64 = 0.6;
const MARKET_PREMIUM_MONTHLY: f64 = 0.004;
const SEASONAL_AMPLITUDE: f64 = 0.01;
const MARKET_VOL: f64 = 0.02;
const IDIO_VOL: f64 = 0.03;

/// Features (as named by the feature builder) that carry the nonlinear signal.
pub const DRIVER_FEATURES: [&str; 3] = ["lag1_roa", "lag1_debt_to_equity", "lag1_unemployment_level"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_assets: usize,
    pub n_years: usize,
    pub seed: u64,
    pub noise_scale: f64,
    /// Annual amplitude `A` of the nonlinear component.
    pub nonlinear_amplitude: f64,
    pub rf_annual: f64,
    /// Probability that a non-driver fundamentals cell is left empty.
    pub missing_rate: f64,
    /// Per-asset betas; drawn from U(0.5, 1.5) when absent. Either way they are
    /// rescaled to a cap-weighted mean of one.
    pub true_betas: Option<Vec<f64>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_assets: 200,
            n_years: 30,
            seed: 7,
            noise_scale: 1.0,
            nonlinear_amplitude: 0.3,
            rf_annual: 0.03,
            missing_rate: 0.0,
            true_betas: None,
        }
    }
}

/// Parameters of the generating process, as written to `groundtruth.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub betas: BTreeMap<String, f64>,
    pub rf_annual: f64,
    pub nonlinear_spec: String,
    /// Annual nonlinear component `G` per (asset, year).
    #[serde(skip)]
    pub nonlinear: BTreeMap<(String, i64), f64>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub prices: PricePanel,
    pub fundamentals: FundamentalsPanel,
    pub macro_panel: MacroPanel,
    pub truth: GroundTruth,
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn asset_id(i: usize) -> String {
    format!("A{i:04}")
}

fn validate(config: &SynthConfig) -> Result<()> {
    if config.n_assets == 0 {
        return Err(Error::Config("n_assets must be at least 1".into()));
    }
    if config.n_years < 5 {
        return Err(Error::Config(format!(
            "n_years = {} is too short: need at least 5 (3-year window plus a target year)",
            config.n_years
        )));
    }
    if !(config.noise_scale >= 0.0 && config.noise_scale.is_finite()) {
        return Err(Error::Config("noise_scale must be finite and >= 0".into()));
    }
    if !config.nonlinear_amplitude.is_finite() || !config.rf_annual.is_finite() {
        return Err(Error::Config("nonlinear_amplitude and rf_annual must be finite".into()));
    }
    if !(0.0..1.0).contains(&config.missing_rate) {
        return Err(Error::Config("missing_rate must be in [0, 1)".into()));
    }
    if let Some(b) = &config.true_betas {
        if b.len() != config.n_assets || b.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!(
                "true_betas must hold {} finite values",
                config.n_assets
            )));
        }
    }
    Ok(())
}

fn simulate_macro(config: &SynthConfig, n_months: usize) -> Vec<Vec<f64>> {
    let mut rng = seeded(derive(config.seed, "synth/macro"));
    let innovation = (1.0 - MACRO_PERSISTENCE * MACRO_PERSISTENCE).sqrt();
    let params: Vec<(f64, f64)> = MACRO_SERIES
        .iter()
        .map(|&(name, mean, sd)| {
            if name == "treasury_10y_yield" {
                (config.rf_annual, sd * config.noise_scale)
            } else {
                (mean, sd)
            }
        })
        .collect();
    let mut state: Vec<f64> = params.iter().map(|_| normal(&mut rng)).collect();
    let mut out = Vec::with_capacity(n_months);
    for _ in 0..n_months {
        let row = params
            .iter()
            .zip(&mut state)
            .map(|(&(mean, sd), z)| {
                let v = mean + sd * *z;
                *z = MACRO_PERSISTENCE * *z + innovation * normal(&mut rng);
                v
            })
            .collect();
        out.push(row);
    }
    out
}

/// Annual line items for one asset-year from its latent state.
fn fundamentals_row(size: f64, z: &[f64; 8], rng: &mut Rng) -> Vec<f64> {
    let [z_size, z_turn, z_roa, z_de, z_margin, z_cf, z_capex, z_wc] = *z;
    let mut e = || normal(rng);
    let assets = size * (0.15 * z_size).exp();
    let revenue = assets * 0.8 * (0.25 * z_turn).exp();
    let gross_profit = revenue * (0.35 + 0.06 * z_margin);
    let cost_of_revenue = revenue - gross_profit;
    let net_income = assets * (0.05 + 0.03 * z_roa);
    let de = (0.4 * z_de).exp();
    let total_equity = assets / (1.0 + 1.25 * de);
    let total_debt = total_equity * de;
    let total_liabilities = assets - total_equity;
    let short_term_debt = 0.3 * total_debt;
    let long_term_debt = total_debt - short_term_debt;
    let accounts_payable = 0.6 * (total_liabilities - total_debt);
    let interest_expense = 0.05 * total_debt;
    let pretax_income = if net_income > 0.0 {
        net_income / 0.79
    } else {
        net_income
    };
    let income_tax = pretax_income - net_income;
    let ebit = pretax_income + interest_expense;
    let depreciation = 0.04 * assets;
    let ebitda = ebit + depreciation;
    let rnd_expense = revenue * 0.03 * (0.3 * e()).exp();
    let sga_expense = gross_profit - ebit - rnd_expense - depreciation;
    let operating_cash_flow = net_income + depreciation + 0.02 * assets * z_cf;
    let capex = assets * 0.05 * (0.3 * z_capex).exp();
    let free_cash_flow = operating_cash_flow - capex;
    let current_assets = assets * 0.35 * (0.2 * z_wc).exp();
    let cash = current_assets * 0.3 * (0.2 * e()).exp();
    let receivables = current_assets * 0.35;
    let inventory = current_assets - cash - receivables;
    let current_liabilities = assets * 0.25 * (0.2 * e()).exp();
    let working_capital = current_assets - current_liabilities;
    let ppe = assets * 0.4 * (0.1 * e()).exp();
    let goodwill = assets * 0.1 * (0.5 * e()).exp();
    let intangibles = assets * 0.05 * (0.5 * e()).exp();
    let retained_earnings = total_equity * 0.6 * (0.2 * e()).exp();
    let dividends_paid = net_income.max(0.0) * 0.3;
    let share_repurchases = net_income.max(0.0) * 0.2 * (0.3 * e()).exp();
    let employees = assets * 2.0 * (0.2 * e()).exp();
    let diluted_shares = size * 0.01 * (0.05 * e()).exp();
    vec![
        revenue,
        cost_of_revenue,
        gross_profit,
        sga_expense,
        rnd_expense,
        depreciation,
        ebitda,
        ebit,
        interest_expense,
        pretax_income,
        income_tax,
        net_income,
        assets,
        current_assets,
        cash,
        receivables,
        inventory,
        ppe,
        goodwill,
        intangibles,
        total_liabilities,
        current_liabilities,
        accounts_payable,
        short_term_debt,
        long_term_debt,
        total_debt,
        total_equity,
        retained_earnings,
        operating_cash_flow,
        capex,
        free_cash_flow,
        dividends_paid,
        share_repurchases,
        working_capital,
        employees,
        diluted_shares,
    ]
}

fn nonlinear_spec(amplitude: f64) -> String {
    format!(
        "G[i,y] = {amplitude} * (tanh((roa - 0.05) / 0.015) + tanh((debt_to_equity - 1) / 0.2) * (1 + clamp((unemployment - 0.06) / 0.01, -2, 2))); \
         roa = net_income/total_assets and debt_to_equity = total_debt/total_equity from fiscal year y-1; \
         unemployment = mean over the 12 months of year y-1; G/12 is added to each monthly return of year y (0 in year 0)"
    )
}

/// Annual nonlinear component from the previous year's drivers.
pub(crate) fn nonlinear_component(amplitude: f64, roa: f64, debt_to_equity: f64, unemployment: f64) -> f64 {
    let s = ((roa - 0.05) / 0.015).tanh();
    let lever = ((debt_to_equity - 1.0) / 0.2).tanh();
    let macro_term = lever * (1.0 + ((unemployment - 0.06) / 0.01).clamp(-2.0, 2.0));
    amplitude * (s + macro_term)
}

/// Generates prices, fundamentals, macro series and the ground truth they were drawn from.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SynthOutput> {
    validate(config)?;
    let n = config.n_assets;
    let n_years = config.n_years;
    let n_months = 12 * n_years;

    // Sizes double as fixed market-cap weights.
    let mut rng = seeded(derive(config.seed, "synth/assets"));
    let sizes: Vec<f64> = (0..n).map(|_| 1000.0 * normal(&mut rng).exp()).collect();
    let total_size: f64 = sizes.iter().sum();
    let weights: Vec<f64> = sizes.iter().map(|s| s / total_size).collect();
    let raw_betas: Vec<f64> = match &config.true_betas {
        Some(b) => b.clone(),
        None => (0..n).map(|_| rng.random_range(0.5..1.5)).collect(),
    };
    let weighted_beta: f64 = weights.iter().zip(&raw_betas).map(|(w, b)| w * b).sum();
    if weighted_beta.abs() < 1e-12 {
        return Err(Error::Config("cap-weighted mean beta is zero".into()));
    }
    let betas: Vec<f64> = raw_betas.iter().map(|b| b / weighted_beta).collect();
    let initial_prices: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..100.0)).collect();

    let macro_rows = simulate_macro(config, n_months);
    let unemployment_idx = MACRO_SERIES
        .iter()
        .position(|s| s.0 == "unemployment")
        .expect("unemployment series");
    let unemployment_by_year: Vec<f64> = (0..n_years)
        .map(|y| (0..12).map(|m| macro_rows[12 * y + m][unemployment_idx]).sum::<f64>() / 12.0)
        .collect();

    // Fundamentals: latent annual AR(1) states per asset.
    let mut frng = seeded(derive(config.seed, "synth/fundamentals"));
    let mut mrng = seeded(derive(config.seed, "synth/missing"));
    let latent_innov = (1.0 - LATENT_PERSISTENCE * LATENT_PERSISTENCE).sqrt();
    let item_pos = |name: &str| FUNDAMENTAL_ITEMS.iter().position(|i| *i == name).expect("item");
    let (ni, ta, td, te) = (
        item_pos("net_income"),
        item_pos("total_assets"),
        item_pos("total_debt"),
        item_pos("total_equity"),
    );
    let driver_idx: Vec<usize> = DRIVER_ITEMS.iter().map(|d| item_pos(d)).collect();
    let mut fundamentals_rows = Vec::with_capacity(n * n_years);
    let mut nonlinear = BTreeMap::new();
    let mut g_annual = vec![vec![0.0; n_years]; n];
    for i in 0..n {
        let mut z = [0.0f64; 8];
        z.iter_mut().for_each(|v| *v = normal(&mut frng));
        for y in 0..n_years {
            let items = fundamentals_row(sizes[i], &z, &mut frng);
            if y + 1 < n_years {
                let roa = items[ni] / items[ta];
                let de = items[td] / items[te];
                g_annual[i][y + 1] = nonlinear_component(config.nonlinear_amplitude, roa, de, unemployment_by_year[y]);
            }
            let values: Vec<Option<f64>> = items
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let blank = config.missing_rate > 0.0
                        && !driver_idx.contains(&k)
                        && mrng.random::<f64>() < config.missing_rate;
                    (!blank).then_some(*v)
                })
                .collect();
            fundamentals_rows.push((asset_id(i), y as i64, values));
            for v in z.iter_mut() {
                *v = LATENT_PERSISTENCE * *v + latent_innov * normal(&mut frng);
            }
        }
        for (y, g) in g_annual[i].iter().enumerate() {
            nonlinear.insert((asset_id(i), y as i64), *g);
        }
    }

    // Market excess return, seasonal plus noise.
    let mut krng = seeded(derive(config.seed, "synth/market"));
    let market: Vec<f64> = (0..n_months)
        .map(|t| {
            let season = (2.0 * PI * (t % 12) as f64 / 12.0).sin();
            MARKET_PREMIUM_MONTHLY + SEASONAL_AMPLITUDE * season + config.noise_scale * MARKET_VOL * normal(&mut krng)
        })
        .collect();
    let rf_m = config.rf_annual / 12.0;
    // Cap scale index: any positive sequence keeps weights fixed.
    let mut scale = Vec::with_capacity(n_months);
    let mut level = 1e5;
    for m in &market {
        level *= 1.0 + rf_m + m;
        scale.push(level.max(1e-3));
    }

    let mut rrng = seeded(derive(config.seed, "synth/returns"));
    let mut vrng = seeded(derive(config.seed, "synth/volume"));
    let mut price_rows = Vec::with_capacity(n * n_months);
    for i in 0..n {
        let mut price = initial_prices[i];
        for t in 0..n_months {
            let y = t / 12;
            let noise = config.noise_scale * IDIO_VOL * normal(&mut rrng);
            let r = (rf_m + betas[i] * market[t] + g_annual[i][y] / 12.0 + noise).max(-0.95);
            let prev = price;
            price = prev * (1.0 + r);
            let monthly_return = price / prev - 1.0;
            let shares = weights[i] * scale[t] * 1e6 / price;
            let volume = shares * 0.08 * (0.3 * normal(&mut vrng)).exp();
            price_rows.push(PriceRow {
                asset_id: asset_id(i),
                month: t as i64,
                price,
                monthly_return,
                volume,
                shares_outstanding: shares,
            });
        }
    }

    let prices = PricePanel::from_rows(price_rows)?;
    let fundamentals = FundamentalsPanel::from_rows(
        FUNDAMENTAL_ITEMS.iter().map(|s| s.to_string()).collect(),
        fundamentals_rows,
    )?;
    let macro_panel = MacroPanel::from_rows(
        MACRO_SERIES.iter().map(|s| s.0.to_string()).collect(),
        macro_rows.into_iter().enumerate().map(|(t, v)| (t as i64, v)).collect(),
    )?;
    let truth = GroundTruth {
        betas: (0..n).map(|i| (asset_id(i), betas[i])).collect(),
        rf_annual: config.rf_annual,
        nonlinear_spec: nonlinear_spec(config.nonlinear_amplitude),
        nonlinear,
    };
    Ok(SynthOutput {
        prices,
        fundamentals,
        macro_panel,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_assets: 5,
            n_years: 6,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn short_history_is_rejected() {
        let cfg = SynthConfig { n_years: 4, ..small(1) };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn sizes_follow_config() {
        let out = generate_synthetic(&small(3)).unwrap();
        assert_eq!(out.prices.n_assets(), 5);
        assert_eq!(out.prices.n_rows(), 5 * 72);
        assert_eq!(out.fundamentals.n_rows(), 5 * 6);
        assert_eq!(out.macro_panel.n_rows(), 72);
        assert_eq!(out.truth.betas.len(), 5);
    }

    #[test]
    fn betas_have_unit_cap_weighted_mean() {
        let out = generate_synthetic(&small(9)).unwrap();
        let caps: Vec<f64> = out.prices.assets().map(|(_, s)| s.cap_at(0).unwrap()).collect();
        let total: f64 = caps.iter().sum();
        let mean: f64 = out.truth.betas.values().zip(&caps).map(|(b, c)| b * c / total).sum();
        assert!((mean - 1.0).abs() < 1e-12, "{mean}");
    }

    #[test]
    fn missing_rate_blanks_only_non_drivers() {
        let cfg = SynthConfig {
            missing_rate: 0.5,
            ..small(4)
        };
        let out = generate_synthetic(&cfg).unwrap();
        let ni = out.fundamentals.item_index("net_income").unwrap();
        let mut blanks = 0;
        for (_, _, v) in out.fundamentals.rows() {
            assert!(v[ni].is_some());
            blanks += v.iter().filter(|x| x.is_none()).count();
        }
        assert!(blanks > 0);
    }

    #[test]
    fn nonlinear_component_shape() {
        let g = |roa, de, u| nonlinear_component(0.3, roa, de, u);
        assert_eq!(g(0.05, 1.0, 0.09), 0.0);
        assert!((g(0.2, 1.0, 0.06) - 0.3).abs() < 1e-6);
        assert!((g(-0.1, 1.0, 0.06) + 0.3).abs() < 1e-6);
        // Leverage effect triples at high unemployment and flips sign at low.
        assert!((g(0.05, 5.0, 0.2) - 0.9).abs() < 1e-6);
        assert!((g(0.05, 5.0, 0.0) + 0.3).abs() < 1e-6);
        assert!((g(0.05, 0.0, 0.07) + 0.6).abs() < 1e-3);
    }
}
