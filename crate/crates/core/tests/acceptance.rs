//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Positional arguments select criteria by number; flags are ignored.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use capmbench::boosting::{fit_tree, gbt_fit_design, ngboost_fit_design, Design, GbtParams, TreeParams};
use capmbench::capm::{dcf_value, estimate_beta, vw_market_index, wacc, BetaInputs, DcfInputs, WaccInputs};
use capmbench::dataset::{generate_synthetic, year_start, SynthConfig, SynthOutput, DRIVER_FEATURES};
use capmbench::evaluate::{mse_of, run_benchmark, BenchmarkConfig, BenchmarkReport, HpoBudget, ModelKind};
use capmbench::explain::{shapley_exact, RowFn};
use capmbench::features::{audit_leakage, build_feature_matrix, sequential_split, standardize_features};
use capmbench::hpo::{
    gbt_params_from, gbt_space, grid_search, optimize, Dimension, Method, OptimizeConfig, Params, SearchSpace,
};
use capmbench::neuralnet::{gradient_check, mlp_init, MlpConfig, MlpModel};
use capmbench::rng::seeded;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn synth(seed: u64, n_assets: usize, n_years: usize, noise: f64, amplitude: f64) -> SynthOutput {
    generate_synthetic(&SynthConfig {
        n_assets,
        n_years,
        seed,
        noise_scale: noise,
        nonlinear_amplitude: amplitude,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn central_claim() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in [7, 8, 9] {
        let data = generate_synthetic(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let config = BenchmarkConfig {
            seed,
            roster: vec![ModelKind::Capm, ModelKind::Gbt, ModelKind::DeepFnn],
            budget: HpoBudget {
                gbt_trials: 8,
                fnn_trials: 8,
                fnn_structure: false,
                ..HpoBudget::default()
            },
            ..BenchmarkConfig::default()
        };
        let run = run_benchmark(&data.prices, &data.fundamentals, &data.macro_panel, &config).unwrap();
        let score = |k| run.report.row(k).and_then(|r| r.test_mse).unwrap_or(f64::NAN);
        let capm = score(ModelKind::Capm);
        let gbt = score(ModelKind::Gbt) / capm;
        let fnn = score(ModelKind::DeepFnn) / capm;
        ok &= gbt <= 0.5 && fnn <= 0.5;
        lines.push(format!(
            "seed {seed}: capm {capm:.4}, gbt/capm {gbt:.3}, deep_fnn/capm {fnn:.3}"
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    check(ok, format!("{}; {secs:.0}s", lines.join("; ")))
}

fn capm_world() -> Outcome {
    let data = synth(7, 200, 30, 0.0, 0.0);
    let config = BenchmarkConfig {
        roster: vec![ModelKind::Capm],
        ..BenchmarkConfig::default()
    };
    let run = run_benchmark(&data.prices, &data.fundamentals, &data.macro_panel, &config).unwrap();
    let mse = run.report.rows[0].test_mse.unwrap_or(f64::NAN);
    let beta_err = run
        .capm_estimates
        .iter()
        .map(|e| (e.beta - data.truth.betas[&e.asset_id]).abs())
        .fold(0.0, f64::max);
    check(
        mse < 1e-4 && beta_err < 1e-6,
        format!("test mse {mse:.3e}, max beta error {beta_err:.3e}"),
    )
}

fn beta_oracle() -> Outcome {
    let mut rng = seeded(31);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let b = rng.random_range(-0.5..2.5);
        let m: Vec<f64> = (0..36).map(|_| 0.04 * normal.sample(&mut rng)).collect();
        let a: Vec<f64> = m.iter().map(|x| b * x + 0.02 * normal.sample(&mut rng)).collect();
        let n = 36.0;
        let (ma, mm) = (a.iter().sum::<f64>() / n, m.iter().sum::<f64>() / n);
        let cov = a.iter().zip(&m).map(|(x, y)| (x - ma) * (y - mm)).sum::<f64>();
        let var = m.iter().map(|y| (y - mm) * (y - mm)).sum::<f64>();
        let est = estimate_beta(BetaInputs::new(&a, &m).unwrap()).unwrap();
        worst = worst.max((est - cov / var).abs());
    }
    let data = synth(4, 30, 6, 1.0, 0.3);
    let vw = vw_market_index(&data.prices, 1..37).unwrap();
    let self_beta = estimate_beta(BetaInputs::new(&vw, &vw).unwrap()).unwrap();
    check(
        worst < 1e-12 && self_beta == 1.0,
        format!("max deviation {worst:.2e} over 50 fixtures, VW self-beta {self_beta}"),
    )
}

fn valuation_goldens() -> Outcome {
    let w = |d, e, rd, re| {
        wacc(&WaccInputs {
            debt_value: d,
            equity_value: e,
            cost_of_debt: rd,
            cost_of_equity: re,
        })
        .unwrap()
    };
    let dcf = |fcf: &[f64], r, tv| {
        dcf_value(&DcfInputs {
            fcf: fcf.to_vec(),
            terminal_value: tv,
            discount_rate: r,
        })
        .unwrap()
    };
    let goldens = [
        (w(0.0, 100.0, 0.04, 0.10), 0.10),
        (w(100.0, 0.0, 0.04, 0.10), 0.04),
        (w(50.0, 50.0, 0.04, 0.10), 0.07),
        (dcf(&[100.0], 0.0, 0.0), 100.0),
        (dcf(&[100.0, 110.0], 0.10, 0.0), 200.0),
        (dcf(&[100.0, 110.0], 0.10, 121.0), 300.0),
    ];
    let exact = goldens.iter().filter(|(got, want)| got == want).count();
    let flows = [50.0, 80.0, 120.0, 0.0, 40.0];
    let values: Vec<f64> = (0..=60).map(|k| dcf(&flows, -0.2 + 0.01 * k as f64, 500.0)).collect();
    let monotone = values.windows(2).all(|p| p[1] < p[0]);
    check(
        exact == goldens.len() && monotone,
        format!(
            "{exact}/{} exact goldens, dcf decreasing over 61 rates: {monotone}",
            goldens.len()
        ),
    )
}

fn jittered_batch(model: &MlpModel, n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = seeded(seed);
    let mut x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
    let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z = x.dot(&model.layers[0].weights);
    for (i, row) in z.rows().into_iter().enumerate() {
        if row.iter().any(|v| v.abs() < 1e-3) {
            x.row_mut(i).mapv_inplace(|v| v + 0.0137);
        }
    }
    (x, y)
}

fn gradient_checks() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, config, tol) in [
        ("shallow", MlpConfig::shallow(), 1e-5),
        ("deep", MlpConfig::deep(), 1e-5),
        ("linear", MlpConfig::with_layers(&[]), 1e-7),
    ] {
        let m = mlp_init(&config, 24).unwrap();
        let (x, y) = if m.layers.len() > 1 {
            jittered_batch(&m, 16, 24, 5)
        } else {
            let mut rng = seeded(6);
            let x = Array2::from_shape_fn((16, 24), |_| rng.random_range(-2.0..2.0));
            (x, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
        };
        let r = gradient_check(&m, x.view(), &y, config.l2_penalty.max(1e-3), 17).unwrap();
        ok &= r.max_relative_error < tol;
        parts.push(format!("{name} {:.2e}", r.max_relative_error));
    }
    check(ok, format!("max relative error: {}", parts.join(", ")))
}

fn split_oracle() -> Outcome {
    let mut rng = seeded(61);
    let sse = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    let mut agree = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=50);
        let d = rng.random_range(1..=3);
        let levels = rng.random_range(2..=12);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(0..levels) as f64).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Exhaustive search in (feature, threshold) order; earlier wins ties.
        let mut best: Option<(f64, Vec<bool>)> = None;
        for f in 0..d {
            let mut vals: Vec<f64> = (0..n).map(|i| x[i * d + f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let left: Vec<bool> = (0..n).map(|i| x[i * d + f] <= (w[0] + w[1]) / 2.0).collect();
                let l: Vec<f64> = (0..n).filter(|&i| left[i]).map(|i| r[i]).collect();
                let rr: Vec<f64> = (0..n).filter(|&i| !left[i]).map(|i| r[i]).collect();
                let s = sse(&l) + sse(&rr);
                if best.as_ref().is_none_or(|(b, _)| s < b - 1e-12) {
                    best = Some((s, left));
                }
            }
        }
        let tree = fit_tree(
            &Design::new(&x, n, d).unwrap(),
            &r,
            &TreeParams {
                max_depth: 1,
                min_samples_leaf: 1,
                l2_leaf_penalty: 0.0,
            },
        );
        let chosen = tree
            .root_split()
            .map(|(f, t)| (0..n).map(|i| x[i * d + f] <= t).collect::<Vec<bool>>());
        let matches = match (&best, chosen) {
            (Some((s, left)), Some(c)) => {
                let l: Vec<f64> = (0..n).filter(|&i| c[i]).map(|i| r[i]).collect();
                let rr: Vec<f64> = (0..n).filter(|&i| !c[i]).map(|i| r[i]).collect();
                *left == c || (sse(&l) + sse(&rr) - s).abs() < 1e-12
            }
            (None, None) => true,
            (Some((s, _)), None) => *s >= sse(&r) - 1e-12,
            (None, Some(_)) => false,
        };
        agree += matches as usize;
    }
    check(agree == 200, format!("{agree}/200 instances match brute force"))
}

fn wavy(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let x: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..n)
        .map(|i| (3.0 * x[i * 3]).sin() + x[i * 3 + 1].powi(2) + noise.sample(&mut rng))
        .collect();
    (x, y)
}

fn boosting_monotone() -> Outcome {
    let (x, y) = wavy(300, 1);
    let design = Design::new(&x, 300, 3).unwrap();
    let m = gbt_fit_design(
        &design,
        &y,
        &GbtParams {
            n_estimators: 10,
            learning_rate: 0.1,
            l2_leaf_penalty: 0.0,
            ..GbtParams::default()
        },
    )
    .unwrap();
    let monotone = m.train_mse.windows(2).all(|w| w[1] <= w[0]);
    // Targets on a dyadic grid sum exactly in any order, so the mean is unambiguous.
    let grid: Vec<f64> = y.iter().map(|v| (v * 1048576.0).round() / 1048576.0).collect();
    let empty = gbt_fit_design(
        &design,
        &grid,
        &GbtParams {
            n_estimators: 0,
            ..GbtParams::default()
        },
    )
    .unwrap();
    let mean = grid.iter().sum::<f64>() / grid.len() as f64;
    let exact = empty.predict_flat(&x).unwrap().iter().all(|p| *p == mean);
    check(
        monotone && exact,
        format!(
            "train mse {:.4} -> {:.4} non-increasing: {monotone}; empty ensemble predicts mean exactly: {exact}",
            m.train_mse[0],
            m.train_mse.last().unwrap()
        ),
    )
}

fn ngboost_calibration() -> Outcome {
    let n = 600;
    let mut rng = seeded(21);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| (3.0 * v).sin() + noise.sample(&mut rng)).collect();
    let m = ngboost_fit_design(&Design::new(&x, n, 1).unwrap(), &y, &GbtParams::ngboost_default()).unwrap();
    let mut sigma: Vec<f64> = m.predict_dist_flat(&x).unwrap().iter().map(|p| p.sigma).collect();
    sigma.sort_by(f64::total_cmp);
    let median = sigma[n / 2];
    let monotone = m.train_nll.windows(2).all(|w| w[1] <= w[0]);
    check(
        (median - 0.1).abs() <= 0.025 && monotone,
        format!("median sigma {median:.4} (truth 0.1), nll non-increasing: {monotone}"),
    )
}

/// Mean marginal contribution over every feature ordering.
fn ordering_oracle(f: &dyn Fn(&[f64]) -> f64, row: &[f64], bg: &[Vec<f64>]) -> Vec<f64> {
    let d = row.len();
    let mut cache: HashMap<u32, f64> = HashMap::new();
    let mut value = |mask: u32| {
        *cache.entry(mask).or_insert_with(|| {
            bg.iter()
                .map(|b| {
                    let x: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { row[j] } else { b[j] }).collect();
                    f(&x)
                })
                .sum::<f64>()
                / bg.len() as f64
        })
    };
    let mut order: Vec<usize> = (0..d).collect();
    let mut phi = vec![0.0; d];
    let mut count = 0.0;
    loop {
        let mut mask = 0u32;
        for &k in &order {
            let before = value(mask);
            mask |= 1 << k;
            phi[k] += value(mask) - before;
        }
        count += 1.0;
        let Some(i) = (0..d.saturating_sub(1)).rev().find(|&i| order[i] < order[i + 1]) else {
            break;
        };
        let j = (i + 1..d).rev().find(|&j| order[j] > order[i]).unwrap();
        order.swap(i, j);
        order[i + 1..].reverse();
    }
    phi.iter().map(|p| p / count).collect()
}

fn shapley_axioms() -> Outcome {
    let mut rng = seeded(71);
    let mut worst_gap: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let mut worst_dummy: f64 = 0.0;
    let mut worst_symmetry: f64 = 0.0;
    for d in 3..=8 {
        // The last feature is a dummy and the first two enter symmetrically.
        let f = move |r: &[f64]| {
            let mut v = r[0] * r[1] + (r[0] + r[1]).sin();
            for (j, x) in r.iter().enumerate().take(d - 1).skip(2) {
                v += (j as f64) * x * x - x * (r[0] + r[1]);
            }
            v
        };
        let bg: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let mut row: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        row[1] = row[0];
        let mut bg = bg;
        for b in &mut bg {
            b[1] = b[0];
        }
        let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        let feats: Vec<usize> = (0..d).collect();
        let a = shapley_exact(&RowFn::new(d, f), &names, &row, &bg.concat(), &feats).unwrap();
        let oracle = ordering_oracle(&f, &row, &bg);
        worst_gap = worst_gap.max(a.efficiency_gap().abs());
        worst_oracle = a
            .phi
            .iter()
            .zip(&oracle)
            .map(|(p, o)| (p - o).abs())
            .fold(worst_oracle, f64::max);
        worst_dummy = worst_dummy.max(a.phi[d - 1].abs());
        worst_symmetry = worst_symmetry.max((a.phi[0] - a.phi[1]).abs());
    }
    check(
        worst_gap < 1e-9 && worst_oracle < 1e-10 && worst_dummy < 1e-12 && worst_symmetry < 1e-12,
        format!(
            "d=3..8: efficiency gap {worst_gap:.1e}, oracle {worst_oracle:.1e}, dummy {worst_dummy:.1e}, symmetry {worst_symmetry:.1e}"
        ),
    )
}

fn leakage_audit() -> Outcome {
    let mut clean = 0;
    let mut rows = 0;
    for seed in [1, 2, 3] {
        let data = synth(seed, 40, 12, 1.0, 0.3);
        let m = build_feature_matrix(&data.prices, &data.fundamentals, &data.macro_panel, 3).unwrap();
        let report = audit_leakage(&m, &data.prices, &data.fundamentals, &data.macro_panel);
        clean += report.is_clean() as usize;
        rows += report.rows;
    }
    let data = synth(4, 10, 8, 1.0, 0.3);
    let mut m = build_feature_matrix(&data.prices, &data.fundamentals, &data.macro_panel, 3).unwrap();
    let j = m.feature_index("lag1_cpi_level").unwrap();
    let cpi = data.macro_panel.series_index("cpi").unwrap();
    let start = year_start(m.keys[0].target_year);
    m.x[j] = (start..start + 12)
        .map(|t| data.macro_panel.value(t, cpi).unwrap())
        .sum::<f64>()
        / 12.0;
    let corrupted = audit_leakage(&m, &data.prices, &data.fundamentals, &data.macro_panel);
    check(
        clean == 3 && corrupted.leakage_violations > 0,
        format!(
            "{clean}/3 generated matrices clean ({rows} rows); corrupted fixture flagged {} violation(s)",
            corrupted.leakage_violations
        ),
    )
}

fn hpo_efficacy() -> Outcome {
    let data = synth(12, 40, 12, 1.0, 0.3);
    let m = build_feature_matrix(&data.prices, &data.fundamentals, &data.macro_panel, 3).unwrap();
    let outer = sequential_split(&m, 0.3).unwrap();
    let inner = standardize_features(sequential_split(&outer.train, 0.25).unwrap()).unwrap();
    let mut cols: Vec<usize> = DRIVER_FEATURES.iter().map(|n| m.feature_index(n).unwrap()).collect();
    cols.extend(0..16);
    cols.sort_unstable();
    cols.dedup();
    let slice = |x: &[f64], n: usize| -> Vec<f64> {
        let d = m.n_features();
        (0..n).flat_map(|i| cols.iter().map(move |&j| x[i * d + j])).collect()
    };
    let (nt, nv) = (inner.train.n_rows(), inner.test.n_rows());
    let xt = slice(&inner.train.x, nt);
    let xv = slice(&inner.test.x, nv);
    let design = Design::new(&xt, nt, cols.len()).unwrap();
    let space = gbt_space();
    let objective = |p: &Params| {
        let params = gbt_params_from(p, &GbtParams::default())?;
        let model = gbt_fit_design(&design, &inner.train.targets, &params)?;
        mse_of(&model.predict_flat(&xv)?, &inner.test.targets)
    };
    let mut wins = 0;
    let mut below_median = 0;
    for seed in 0..10 {
        let run = |method| {
            optimize(
                &space,
                objective,
                &OptimizeConfig {
                    n_trials: 50,
                    method,
                    seed,
                    batch_width: 1,
                    ..OptimizeConfig::default()
                },
            )
            .unwrap()
        };
        let tpe = run(Method::Tpe).best.objective.unwrap();
        let random = run(Method::Random);
        let mut objs: Vec<f64> = random.history.iter().filter_map(|t| t.objective).collect();
        objs.sort_by(f64::total_cmp);
        let median = (objs[(objs.len() - 1) / 2] + objs[objs.len() / 2]) / 2.0;
        wins += (tpe < random.best.objective.unwrap()) as usize;
        below_median += (tpe <= median) as usize;
    }
    // One-sided sign test at the 5% level: P(X >= 9 | n = 10, p = 1/2) = 0.011.
    let sign_test = below_median >= 9;

    let mut rng = seeded(81);
    let mut grids_ok = 0;
    for _ in 0..50 {
        let sizes: Vec<i64> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=4)).collect();
        let total: i64 = sizes.iter().product();
        let values: Vec<f64> = (0..total).map(|_| rng.random_range(-5..5) as f64).collect();
        let space = sizes.iter().enumerate().fold(SearchSpace::new(), |s, (k, n)| {
            s.with(&format!("d{k}"), Dimension::Integer { lo: 0, hi: n - 1 })
        });
        let flat = |p: &Params| {
            sizes
                .iter()
                .enumerate()
                .fold(0, |acc, (k, n)| acc * n + p[&format!("d{k}")].as_i64().unwrap()) as usize
        };
        let out = grid_search(&space, |p| Ok(values[flat(p)])).unwrap();
        let brute = values.iter().copied().fold(f64::INFINITY, f64::min);
        grids_ok += (out.best.objective == Some(brute)) as usize;
    }
    check(
        sign_test && grids_ok == 50,
        format!(
            "TPE best at or below the random-trial median on {below_median}/10 seeds (beat the random best on {wins}/10); grid = brute force on {grids_ok}/50 grids"
        ),
    )
}

fn mse_goldens() -> Outcome {
    let exact = mse_of(&[1.5, 2.5, -0.5], &[1.0, 2.0, -1.0]).unwrap() == 0.25
        && mse_of(&[0.1, -0.2], &[0.0, 0.1]).unwrap() == 0.05;
    let mut rng = seeded(91);
    let mut invariant = true;
    let mut zero = true;
    for _ in 0..500 {
        let n = rng.random_range(1..100);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)))
            .collect();
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        zero &= mse_of(&y, &y).unwrap() == 0.0;
        let before = mse_of(&p, &y).unwrap();
        pairs.shuffle(&mut rng);
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        invariant &= mse_of(&p, &y).unwrap().to_bits() == before.to_bits();
    }
    check(
        exact && zero && invariant,
        format!("goldens exact: {exact}; mse(y, y) = 0: {zero}; permutation invariant on 500 draws: {invariant}"),
    )
}

fn report_bytes(data: &SynthOutput, config: &BenchmarkConfig, dir: &std::path::Path) -> Vec<u8> {
    let run = run_benchmark(&data.prices, &data.fundamentals, &data.macro_panel, config).unwrap();
    let mut report: BenchmarkReport = run.report;
    for row in &mut report.rows {
        row.train_duration_s = 0.0;
    }
    report.write(dir).unwrap();
    std::fs::read(dir.join("report.json")).unwrap()
}

fn determinism() -> Outcome {
    let data = synth(13, 40, 12, 1.0, 0.3);
    let mut config = BenchmarkConfig {
        seed: 13,
        budget: HpoBudget {
            gbt_trials: 4,
            ngboost_trials: 2,
            fnn_trials: 2,
            ..HpoBudget::default()
        },
        ..BenchmarkConfig::default()
    };
    config.gbt.n_estimators = 40;
    config.ngboost.n_estimators = 40;
    config.shallow_fnn.epochs = 5;
    config.deep_fnn.epochs = 5;
    let dir = tempfile::tempdir().unwrap();
    let a = report_bytes(&data, &config, &dir.path().join("a"));
    let b = report_bytes(&data, &config, &dir.path().join("b"));
    check(
        a == b,
        format!(
            "{} models, report.json {} bytes, identical: {}",
            config.roster.len(),
            a.len(),
            a == b
        ),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [Criterion; 13] = [
        ("central claim on three seeds", central_claim),
        ("CAPM-world sanity", capm_world),
        ("beta oracle", beta_oracle),
        ("WACC and DCF goldens", valuation_goldens),
        ("gradient check", gradient_checks),
        ("split-finding oracle", split_oracle),
        ("boosting monotonicity", boosting_monotone),
        ("NGBoost calibration", ngboost_calibration),
        ("Shapley axioms", shapley_axioms),
        ("anti-leakage audit", leakage_audit),
        ("HPO efficacy", hpo_efficacy),
        ("MSE goldens", mse_goldens),
        ("determinism", determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {name} ({secs:.1}s): {detail}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
