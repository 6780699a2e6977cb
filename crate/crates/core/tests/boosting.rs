use capmbench::boosting::{fit_tree, gbt_fit_design, ngboost_fit_design, Design, GbtParams, Tree, TreeParams};
use capmbench::rng::seeded;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn stump() -> TreeParams {
    TreeParams {
        max_depth: 1,
        min_samples_leaf: 1,
        l2_leaf_penalty: 0.0,
    }
}

fn sse(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum()
}

struct Split {
    feature: usize,
    threshold: f64,
    left: Vec<bool>,
    sse: f64,
}

/// Every midpoint split of every feature, in (feature, threshold) order.
fn all_splits(x: &[f64], n: usize, d: usize, r: &[f64]) -> Vec<Split> {
    let mut out = Vec::new();
    for f in 0..d {
        let mut vals: Vec<f64> = (0..n).map(|i| x[i * d + f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<bool> = (0..n).map(|i| x[i * d + f] <= t).collect();
            let side = |go_left: bool| -> Vec<f64> {
                r.iter()
                    .zip(&left)
                    .filter(|(_, b)| **b == go_left)
                    .map(|(v, _)| *v)
                    .collect()
            };
            let (l, rr) = (side(true), side(false));
            out.push(Split {
                feature: f,
                threshold: t,
                sse: sse(&l) + sse(&rr),
                left,
            });
        }
    }
    out
}

#[test]
fn stump_split_matches_brute_force() {
    let mut rng = seeded(17);
    for case in 0..200 {
        let n = rng.random_range(2..=50);
        let d = rng.random_range(1..=3);
        let levels = rng.random_range(2..=12);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(0..levels) as f64 * 0.5).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let design = Design::new(&x, n, d).unwrap();
        let tree = fit_tree(&design, &r, &stump());
        let splits = all_splits(&x, n, d, &r);
        let total = sse(&r);
        let best = splits.iter().map(|s| s.sse).fold(f64::INFINITY, f64::min);
        let tol = 1e-9 * (1.0 + total);
        match tree.root_split() {
            None => assert!(splits.is_empty() || best > total - tol, "case {case}: missed a split"),
            Some((f, t)) => {
                let chosen = splits
                    .iter()
                    .find(|s| s.feature == f && s.threshold == t)
                    .unwrap_or_else(|| panic!("case {case}: ({f}, {t}) is not a midpoint"));
                assert!(chosen.sse <= best + tol, "case {case}: {} vs {best}", chosen.sse);
                let first_same = splits.iter().find(|s| s.left == chosen.left).unwrap();
                assert_eq!((first_same.feature, first_same.threshold), (f, t), "case {case}");
            }
        }
    }
}

#[test]
fn step_target_is_split_exactly() {
    let x: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
    let y: Vec<f64> = x.iter().map(|v| if *v < 0.5 { -1.0 } else { 2.0 }).collect();
    let tree = fit_tree(&Design::new(&x, 20, 1).unwrap(), &y, &stump());
    let (f, t) = tree.root_split().unwrap();
    assert_eq!(f, 0);
    assert!(t > 0.45 && t < 0.5, "{t}");
    for (xi, yi) in x.iter().zip(&y) {
        assert_eq!(tree.predict_row(&[*xi]), *yi);
    }
}

#[test]
fn one_full_depth_round_interpolates() {
    let mut rng = seeded(3);
    let n = 32;
    let x: Vec<f64> = {
        let mut v: Vec<f64> = (0..n).map(|i| i as f64).collect();
        v.shuffle(&mut rng);
        v
    };
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let params = GbtParams {
        n_estimators: 1,
        max_depth: n,
        learning_rate: 1.0,
        l2_leaf_penalty: 0.0,
        min_samples_leaf: 1,
        ..GbtParams::default()
    };
    let m = gbt_fit_design(&Design::new(&x, n, 1).unwrap(), &y, &params).unwrap();
    let pred = m.predict_flat(&x).unwrap();
    for (p, t) in pred.iter().zip(&y) {
        assert!((p - t).abs() < 1e-12, "{p} vs {t}");
    }
}

fn wavy(n: usize, d: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded(seed);
    let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let y = (0..n)
        .map(|i| (3.0 * x[i * d]).sin() + x[i * d + 1] * x[i * d + 1] + noise.sample(&mut rng))
        .collect();
    (x, y)
}

#[test]
fn training_mse_never_increases() {
    let (x, y) = wavy(300, 3, 1);
    let params = GbtParams {
        n_estimators: 10,
        learning_rate: 0.1,
        l2_leaf_penalty: 0.0,
        ..GbtParams::default()
    };
    let m = gbt_fit_design(&Design::new(&x, 300, 3).unwrap(), &y, &params).unwrap();
    assert_eq!(m.trees.len(), 10);
    for w in m.train_mse.windows(2) {
        assert!(w[1] <= w[0], "{:?}", m.train_mse);
    }
}

#[test]
fn empty_ensemble_predicts_exact_mean() {
    let (x, y) = wavy(50, 2, 4);
    let params = GbtParams {
        n_estimators: 0,
        ..GbtParams::default()
    };
    let m = gbt_fit_design(&Design::new(&x, 50, 2).unwrap(), &y, &params).unwrap();
    let mean = y.iter().sum::<f64>() / 50.0;
    assert!(m.predict_flat(&x).unwrap().iter().all(|p| *p == m.base_score));
    assert!((m.base_score - mean).abs() < 1e-15);
}

/// Independent walk over the node array.
fn walk(tree: &Tree, row: &[f64]) -> f64 {
    let mut node = &tree.nodes[0];
    while let Some(f) = node.feature {
        let next = if row[f] <= node.threshold {
            node.left
        } else {
            node.right
        };
        node = &tree.nodes[next.unwrap()];
    }
    node.value
}

#[test]
fn ensemble_matches_hand_routed_traversal() {
    let (x, y) = wavy(60, 2, 8);
    let params = GbtParams {
        n_estimators: 5,
        max_depth: 2,
        learning_rate: 0.3,
        min_samples_leaf: 1,
        ..GbtParams::default()
    };
    let m = gbt_fit_design(&Design::new(&x, 60, 2).unwrap(), &y, &params).unwrap();
    let rows = &x[..10];
    let pred = m.predict_flat(rows).unwrap();
    for (i, p) in pred.iter().enumerate() {
        let row = &rows[i * 2..i * 2 + 2];
        let manual = m.base_score + 0.3 * m.trees.iter().map(|t| walk(t, row)).sum::<f64>();
        assert!((p - manual).abs() < 1e-12);
    }
    assert!(m.predict_flat(&x[..3]).is_err());
}

#[test]
fn fitting_is_deterministic_with_subsampling() {
    let (x, y) = wavy(200, 4, 2);
    let params = GbtParams {
        n_estimators: 20,
        subsample_rows: 0.7,
        subsample_features: 0.5,
        seed: 12,
        ..GbtParams::default()
    };
    let design = Design::new(&x, 200, 4).unwrap();
    let a = gbt_fit_design(&design, &y, &params).unwrap();
    let b = gbt_fit_design(&design, &y, &params).unwrap();
    assert_eq!(a, b);
    let c = capmbench::par::with_width(1, || gbt_fit_design(&design, &y, &params).unwrap());
    assert_eq!(a, c);
}

#[test]
fn ngboost_sigma_matches_residual_scale() {
    let n = 600;
    let mut rng = seeded(21);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise = Normal::new(0.0, 0.1).unwrap();
    let y: Vec<f64> = x.iter().map(|v| (3.0 * v).sin() + noise.sample(&mut rng)).collect();
    let design = Design::new(&x, n, 1).unwrap();
    let m = ngboost_fit_design(&design, &y, &GbtParams::ngboost_default()).unwrap();

    // Maximum-likelihood scale of residuals around 60 equal-width bin means.
    let bins = 60;
    let bin = |v: f64| (((v + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);
    let mut sums = vec![(0.0, 0usize); bins];
    for (v, t) in x.iter().zip(&y) {
        sums[bin(*v)].0 += t;
        sums[bin(*v)].1 += 1;
    }
    let ml_sigma = (x
        .iter()
        .zip(&y)
        .map(|(v, t)| {
            let (s, c) = sums[bin(*v)];
            (t - s / c as f64).powi(2)
        })
        .sum::<f64>()
        / n as f64)
        .sqrt();

    let mut sigmas: Vec<f64> = m.predict_dist_flat(&x).unwrap().iter().map(|p| p.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    let median = sigmas[n / 2];
    assert!((median - 0.1).abs() < 0.025, "median sigma {median}");
    assert!((ml_sigma - 0.1).abs() < 0.01, "oracle sigma {ml_sigma}");
    assert!(
        (median - ml_sigma).abs() < 0.25 * ml_sigma,
        "median {median} vs ml {ml_sigma}"
    );
    for w in m.train_nll.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "nll rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn ngboost_constant_target_recovers_value() {
    let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
    let y = vec![0.37; 40];
    let m = ngboost_fit_design(&Design::new(&x, 40, 1).unwrap(), &y, &GbtParams::ngboost_default()).unwrap();
    for p in m.predict_flat(&x).unwrap() {
        assert!((p - 0.37).abs() < 1e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trees_ignore_training_row_order(seed in any::<u64>(), n in 5usize..60, levels in 2usize..8) {
        let mut rng = seeded(seed);
        let d = 2;
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .map(|_| {
                let r: Vec<f64> = (0..d).map(|_| rng.random_range(0..levels) as f64).collect();
                let y = r[0] - 0.5 * r[1] + rng.random_range(-0.5..0.5);
                (r, y)
            })
            .collect();
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        let fit = |rows: &[(Vec<f64>, f64)]| {
            let x: Vec<f64> = rows.iter().flat_map(|r| r.0.clone()).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let params = GbtParams { n_estimators: 5, max_depth: 3, min_samples_leaf: 1, ..GbtParams::default() };
            gbt_fit_design(&Design::new(&x, rows.len(), d).unwrap(), &y, &params).unwrap()
        };
        let a = fit(&rows);
        let b = fit(&shuffled);
        prop_assert_eq!(&a.trees, &b.trees);
        prop_assert_eq!(a.base_score.to_bits(), b.base_score.to_bits());
    }
}
