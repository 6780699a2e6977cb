use capmbench::dataset::{generate_synthetic, SynthConfig, SynthOutput};
use capmbench::evaluate::{
    assemble_report, keys_digest, mse_of, run_benchmark, BenchmarkConfig, BenchmarkReport, HpoBudget, ModelKind,
    ModelResult, ReportMetadata, RowStatus,
};
use capmbench::features::RowKey;
use capmbench::rng::seeded;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn world(seed: u64, noise: f64, amplitude: f64) -> SynthOutput {
    generate_synthetic(&SynthConfig {
        n_assets: 30,
        n_years: 10,
        seed,
        noise_scale: noise,
        nonlinear_amplitude: amplitude,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn run(data: &SynthOutput, config: &BenchmarkConfig) -> capmbench::evaluate::BenchmarkRun {
    run_benchmark(&data.prices, &data.fundamentals, &data.macro_panel, config).unwrap()
}

#[test]
fn pure_capm_world_is_predicted_by_capm() {
    let data = world(3, 0.0, 0.0);
    let config = BenchmarkConfig {
        roster: vec![ModelKind::Capm],
        ..BenchmarkConfig::default()
    };
    let out = run(&data, &config);
    let row = out.report.row(ModelKind::Capm).unwrap();
    assert_eq!(row.status, RowStatus::Ok);
    assert!(row.test_mse.unwrap() < 1e-4, "{:?}", row.test_mse);
    for e in &out.capm_estimates {
        assert!((e.beta - data.truth.betas[&e.asset_id]).abs() < 1e-6);
    }
}

fn metadata(keys: &[RowKey]) -> ReportMetadata {
    ReportMetadata {
        seed: 1,
        test_fraction: 0.3,
        window_years: 3,
        data_source: "fixture".into(),
        config_digest: "none".into(),
        n_train_rows: 0,
        n_test_rows: keys.len(),
        test_years: vec![2020],
        test_keys_digest: keys_digest(keys),
    }
}

fn result(kind: ModelKind, predictions: Vec<f64>) -> ModelResult {
    ModelResult {
        kind,
        predictions: Ok(predictions),
        train_duration_s: 0.0,
        config_digest: String::new(),
    }
}

#[test]
fn injected_predictions_are_scored_by_hand_values() {
    let keys: Vec<RowKey> = ["A", "B", "C", "D"]
        .iter()
        .map(|a| RowKey {
            asset_id: a.to_string(),
            target_year: 2020,
        })
        .collect();
    let y = vec![0.10, -0.05, 0.20, 0.00];
    let fixtures = [
        (ModelKind::Capm, vec![0.10, -0.05, 0.20, 0.00], 0.0),
        (ModelKind::Gbt, vec![0.60, 0.45, 0.70, 0.50], 0.25),
        (ModelKind::Ngboost, vec![0.20, -0.05, 0.20, 0.00], 0.0025),
        (ModelKind::ShallowFnn, vec![0.0, 0.0, 0.0, 0.0], 0.013125),
        (ModelKind::DeepFnn, vec![0.10, -0.15, 0.40, 0.30], 0.035),
    ];
    let mut results: Vec<ModelResult> = fixtures.iter().map(|(k, p, _)| result(*k, p.clone())).collect();
    results.push(ModelResult {
        kind: ModelKind::Gbt,
        predictions: Ok(vec![0.0; 3]),
        train_duration_s: 0.0,
        config_digest: String::new(),
    });
    let report = assemble_report(metadata(&keys), &y, results);
    for ((kind, _, want), row) in fixtures.iter().zip(&report.rows) {
        assert_eq!(row.model, kind.name());
        assert!(
            (row.test_mse.unwrap() - want).abs() < 1e-15,
            "{}: {:?}",
            row.model,
            row.test_mse
        );
        assert_eq!(row.n_test_rows, 4);
        assert_eq!(row.test_keys_digest, report.metadata.test_keys_digest);
    }
    let bad = report.rows.last().unwrap();
    assert_eq!(bad.status, RowStatus::Failed);
    assert!(bad.error.is_some());
    assert!(!report.all_ok());
}

#[test]
fn report_renders_reference_scores() {
    let keys = vec![RowKey {
        asset_id: "A".into(),
        target_year: 2020,
    }];
    let results = vec![
        result(ModelKind::Capm, vec![1.6001f64.sqrt()]),
        result(ModelKind::Gbt, vec![0.3280f64.sqrt()]),
        result(ModelKind::DeepFnn, vec![0.3531f64.sqrt()]),
    ];
    let report = assemble_report(metadata(&keys), &[0.0], results);
    let table = report.render_table();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("Model"));
    assert_eq!(
        lines[2].split('|').map(str::trim).collect::<Vec<_>>(),
        ["CAPM", "1.6001"]
    );
    assert_eq!(
        lines[3].split('|').map(str::trim).collect::<Vec<_>>(),
        ["GBT (XGBoost-analog)", "0.3280"]
    );
    assert_eq!(
        lines[4].split('|').map(str::trim).collect::<Vec<_>>(),
        ["Deep FNN", "0.3531"]
    );

    let csv = report.to_csv().unwrap();
    assert_eq!(csv.lines().next().unwrap(), "model,test_mse,n_test_rows");
    let back = BenchmarkReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
}

fn strip_durations(mut r: BenchmarkReport) -> String {
    for row in &mut r.rows {
        row.train_duration_s = 0.0;
    }
    r.to_json().unwrap()
}

#[test]
fn benchmark_is_deterministic_and_shares_test_rows() {
    let data = world(5, 1.0, 0.3);
    let mut small = BenchmarkConfig {
        seed: 5,
        roster: vec![ModelKind::Capm, ModelKind::Gbt, ModelKind::ShallowFnn],
        budget: HpoBudget {
            gbt_trials: 3,
            fnn_trials: 2,
            batch_width: 2,
            ..HpoBudget::default()
        },
        gbt: capmbench::boosting::GbtParams {
            n_estimators: 30,
            ..Default::default()
        },
        ..BenchmarkConfig::default()
    };
    small.shallow_fnn.epochs = 5;
    let a = run(&data, &small);
    let b = run(&data, &small);
    assert_eq!(strip_durations(a.report.clone()), strip_durations(b.report.clone()));
    let c = capmbench::par::with_width(1, || run(&data, &small));
    assert_eq!(strip_durations(a.report.clone()), strip_durations(c.report));

    assert!(a.report.all_ok(), "{:?}", a.report.rows);
    assert_eq!(a.report.rows.len(), 3);
    let digest = keys_digest(&a.split.test.keys);
    for row in &a.report.rows {
        assert_eq!(row.test_keys_digest, digest);
        assert_eq!(row.n_test_rows, a.split.test.n_rows());
    }
    let capm_keys: Vec<RowKey> = a
        .capm_estimates
        .iter()
        .map(|e| RowKey {
            asset_id: e.asset_id.clone(),
            target_year: e.target_year,
        })
        .collect();
    assert_eq!(capm_keys, a.split.test.keys);
    for (kind, p) in &a.predictions {
        let row = a.report.row(*kind).unwrap();
        assert_eq!(row.test_mse, Some(mse_of(p, &a.split.test.targets).unwrap()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mse_is_nonnegative_and_zero_on_itself(
        y in proptest::collection::vec(-1e3f64..1e3, 1..64),
        p in proptest::collection::vec(-1e3f64..1e3, 64),
    ) {
        let p = &p[..y.len()];
        prop_assert_eq!(mse_of(&y, &y).unwrap(), 0.0);
        let v = mse_of(p, &y).unwrap();
        prop_assert!(v >= 0.0);
        if p != &y[..] {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn mse_ignores_joint_permutation(
        pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64),
        seed in any::<u64>(),
    ) {
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut seeded(seed));
        let split = |v: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { v.iter().copied().unzip() };
        let (p, y) = split(&pairs);
        let (ps, ys) = split(&shuffled);
        prop_assert_eq!(mse_of(&p, &y).unwrap().to_bits(), mse_of(&ps, &ys).unwrap().to_bits());
    }

    #[test]
    fn constant_offset_gives_its_square(
        y in proptest::collection::vec(-10f64..10.0, 1..32),
    ) {
        let p: Vec<f64> = y.iter().map(|v| v + 0.5).collect();
        prop_assert!((mse_of(&p, &y).unwrap() - 0.25).abs() < 1e-12);
    }
}
