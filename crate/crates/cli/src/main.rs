//! `capmbench`: synthetic data, features, training, evaluation and
//! attribution as separate stages that exchange files on disk.

mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use capmbench::capm::{dcf_value, wacc, write_capm_csv, DcfInputs, WaccInputs};
use capmbench::dataset::{generate_synthetic, load_panels, write_panels, FundamentalsPanel, MacroPanel, PricePanel};
use capmbench::evaluate::{run_benchmark_with, BenchmarkReport, BenchmarkRun, ModelKind, TrainedModel};
use capmbench::explain::{
    importance_report, permutation_importance, sample_background, shapley_exact, write_importance_csv,
    MAX_SHAPLEY_FEATURES,
};
use capmbench::features::{
    audit_leakage, build_feature_matrix, sequential_split, standardize_features, write_features_csv,
};
use capmbench::{par, rng};
use clap::{Args, Parser, Subcommand};

use config::{FileConfig, PipelineArgs};

const PANEL_FILES: [&str; 3] = ["prices.csv", "fundamentals.csv", "macro.csv"];

#[derive(Debug, Parser)]
#[command(name = "capmbench", version, about = "CAPM versus machine-learning return forecasts")]
struct Cli {
    /// JSON file with `synth`, `benchmark` and `top_k` sections; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic panel with known betas.
    Synth(SynthArgs),
    /// Build the feature matrix and run the look-ahead audit.
    Features(FeaturesArgs),
    /// Tune and fit models, saving them for later stages.
    Train(TrainArgs),
    /// Score the roster on the held-out years.
    Evaluate(EvaluateArgs),
    /// Rank features and attribute one test prediction.
    Explain(ExplainArgs),
    /// Print a saved report as a table.
    Report(ReportArgs),
    /// Evaluate WACC or DCF inputs given as JSON.
    Valuate(ValuateArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "CAPMBENCH_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DataArg {
    /// Directory holding prices.csv, fundamentals.csv and macro.csv.
    #[arg(long, default_value = "data")]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    assets: Option<usize>,
    #[arg(long)]
    years: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scale of market, idiosyncratic and macro noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Annual amplitude of the nonlinear return component.
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    missing_rate: Option<f64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    window_years: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Directory of `model_<name>.json` files from `train`; models found
    /// there are scored without refitting.
    #[arg(long)]
    trained: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Model to explain.
    #[arg(long, default_value = "gbt")]
    model: ModelKind,
    /// Saved model; fitted from scratch when absent.
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Test row to attribute.
    #[arg(long, default_value_t = 0)]
    row: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Training rows averaged over for absent features.
    #[arg(long, default_value_t = 64)]
    background: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// report.json to render; defaults to the one in the output directory.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ValuateArgs {
    /// `{"D":..,"E":..,"rD":..,"rE":..}`
    #[arg(long)]
    wacc: Option<String>,
    /// `{"fcf":[..],"terminal_value":..,"discount_rate":..}`
    #[arg(long)]
    dcf: Option<String>,
}

struct Panels {
    prices: PricePanel,
    fundamentals: FundamentalsPanel,
    macro_panel: MacroPanel,
    source: String,
}

fn load(dir: &Path) -> Result<Panels> {
    let paths: Vec<PathBuf> = PANEL_FILES.iter().map(|f| dir.join(f)).collect();
    let (prices, fundamentals, macro_panel) = load_panels(&paths[0], &paths[1], &paths[2])?;
    let mut bytes = Vec::new();
    for p in &paths {
        bytes.extend(std::fs::read(p)?);
    }
    let digest = capmbench::evaluate::sha256_hex(&bytes);
    Ok(Panels {
        prices,
        fundamentals,
        macro_panel,
        source: format!("csv sha256:{}", &digest[..16]),
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

fn model_path(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(format!("model_{}.json", kind.name()))
}

fn save_models(dir: &Path, run: &BenchmarkRun) -> Result<()> {
    for (kind, model) in &run.models {
        if *kind != ModelKind::Capm {
            std::fs::write(model_path(dir, *kind), model.to_json()?)?;
        }
    }
    Ok(())
}

fn synth(file: &FileConfig, a: &SynthArgs) -> Result<ExitCode> {
    let mut cfg = file.synth.clone();
    if let Some(v) = a.assets {
        cfg.n_assets = v;
    }
    if let Some(v) = a.years {
        cfg.n_years = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_scale = v;
    }
    if let Some(v) = a.amplitude {
        cfg.nonlinear_amplitude = v;
    }
    if let Some(v) = a.missing_rate {
        cfg.missing_rate = v;
    }
    let data = generate_synthetic(&cfg)?;
    let out = &a.out.out;
    write_panels(out, &data.prices, &data.fundamentals, &data.macro_panel)?;
    write_json(&out.join("groundtruth.json"), &data.truth)?;
    println!(
        "synth: {} assets x {} years (seed {}) -> {}",
        cfg.n_assets,
        cfg.n_years,
        cfg.seed,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn features(file: &FileConfig, a: &FeaturesArgs) -> Result<ExitCode> {
    let window = a.window_years.unwrap_or(file.benchmark.window_years);
    let p = load(&a.data.data)?;
    let matrix = build_feature_matrix(&p.prices, &p.fundamentals, &p.macro_panel, window)?;
    let audit = audit_leakage(&matrix, &p.prices, &p.fundamentals, &p.macro_panel);
    let out = &a.out.out;
    std::fs::create_dir_all(out)?;
    write_features_csv(&matrix, BufWriter::new(File::create(out.join("features.csv"))?))?;
    write_json(&out.join("audit.json"), &audit)?;
    println!(
        "features: {} rows x {} features, {} dropped for missing values, {} leakage violations -> {}",
        matrix.n_rows(),
        matrix.n_features(),
        audit.dropped_missing,
        audit.leakage_violations,
        out.display()
    );
    if !audit.is_clean() {
        bail!("look-ahead audit failed: {}", audit.violations.join("; "));
    }
    Ok(ExitCode::SUCCESS)
}

fn train(file: &FileConfig, a: &TrainArgs) -> Result<ExitCode> {
    let p = load(&a.data.data)?;
    let out = &a.out.out;
    std::fs::create_dir_all(out)?;
    let mut cfg = a.pipeline.apply(&file.benchmark, &p.source)?;
    cfg.trials_dir = Some(out.clone());
    let run = run_benchmark_with(&p.prices, &p.fundamentals, &p.macro_panel, &cfg, &BTreeMap::new())?;
    save_models(out, &run)?;
    for row in &run.report.rows {
        match &row.error {
            None => println!("train: {} fitted in {:.1}s", row.model, row.train_duration_s),
            Some(e) => println!("train: {} failed: {e}", row.model),
        }
    }
    Ok(exit_for(&run.report))
}

fn evaluate(file: &FileConfig, a: &EvaluateArgs) -> Result<ExitCode> {
    let p = load(&a.data.data)?;
    let out = &a.out.out;
    std::fs::create_dir_all(out)?;
    let mut cfg = a.pipeline.apply(&file.benchmark, &p.source)?;
    cfg.trials_dir = Some(out.clone());
    let mut pretrained = BTreeMap::new();
    if let Some(dir) = &a.trained {
        for &kind in cfg.roster.iter().filter(|k| **k != ModelKind::Capm) {
            let path = model_path(dir, kind);
            if path.exists() {
                let json = std::fs::read_to_string(&path)?;
                let model =
                    TrainedModel::from_json(kind, &json).with_context(|| format!("loading {}", path.display()))?;
                pretrained.insert(kind, model);
            }
        }
    }
    let run = run_benchmark_with(&p.prices, &p.fundamentals, &p.macro_panel, &cfg, &pretrained)?;
    run.report.write(out)?;
    if !run.capm_estimates.is_empty() {
        write_capm_csv(
            &run.capm_estimates,
            BufWriter::new(File::create(out.join("capm_predictions.csv"))?),
        )?;
    }
    save_models(out, &run)?;
    print!("{}", run.report.render_table());
    println!(
        "evaluate: {} test rows over years {:?} -> {}",
        run.report.metadata.n_test_rows,
        run.report.metadata.test_years,
        out.display()
    );
    Ok(exit_for(&run.report))
}

fn exit_for(report: &BenchmarkReport) -> ExitCode {
    for row in report.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "error: {} failed: {}",
            row.model,
            row.error.as_deref().unwrap_or_default()
        );
    }
    if report.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn explain(file: &FileConfig, a: &ExplainArgs) -> Result<ExitCode> {
    if a.model == ModelKind::Capm {
        bail!("CAPM uses no features; choose a fitted model");
    }
    let top_k = a.top_k.unwrap_or(file.top_k);
    if top_k == 0 {
        bail!("--top-k must be at least 1");
    }
    let p = load(&a.data.data)?;
    let out = &a.out.out;
    std::fs::create_dir_all(out)?;
    let mut cfg = a.pipeline.apply(&file.benchmark, &p.source)?;
    cfg.roster = vec![a.model];
    let model = match &a.model_file {
        Some(path) => TrainedModel::from_json(a.model, &std::fs::read_to_string(path)?)
            .with_context(|| format!("loading {}", path.display()))?,
        None => {
            let run = run_benchmark_with(&p.prices, &p.fundamentals, &p.macro_panel, &cfg, &BTreeMap::new())?;
            exit_for(&run.report);
            match run.models.into_iter().next() {
                Some((_, m)) => m,
                None => bail!("{} failed to train", a.model.name()),
            }
        }
    };

    let matrix = build_feature_matrix(&p.prices, &p.fundamentals, &p.macro_panel, cfg.window_years)?;
    let split = standardize_features(sequential_split(&matrix, cfg.test_fraction)?)?;
    let ranking = permutation_importance(
        &model,
        &split.test,
        a.repeats,
        rng::derive(cfg.seed, "explain/permutation"),
    )?;
    write_importance_csv(&ranking, BufWriter::new(File::create(out.join("importance.csv"))?))?;
    let report = importance_report(&ranking, top_k)?;
    report.write(out)?;
    print!("{}", report.table);

    if a.row >= split.test.n_rows() {
        bail!("--row {} is past the {} test rows", a.row, split.test.n_rows());
    }
    let names = &split.test.feature_names;
    let features: Vec<usize> = ranking
        .top(top_k.min(MAX_SHAPLEY_FEATURES))
        .iter()
        .map(|e| {
            split
                .test
                .feature_index(&e.feature)
                .expect("ranked feature is a column")
        })
        .collect();
    let background = sample_background(&split.train, a.background, rng::derive(cfg.seed, "explain/background"));
    let attribution = shapley_exact(&model, names, split.test.row(a.row), &background, &features)?;
    std::fs::write(out.join("attribution.json"), attribution.to_json()?)?;
    let key = &split.test.keys[a.row];
    println!(
        "explain: {} ranked {} features; attributed ({}, {}) over the top {} -> {}",
        a.model.name(),
        ranking.len(),
        key.asset_id,
        key.target_year,
        features.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn report(a: &ReportArgs) -> Result<ExitCode> {
    let path = a.input.clone().unwrap_or_else(|| a.out.out.join("report.json"));
    let json = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report = BenchmarkReport::from_json(&json)?;
    print!("{}", report.render_table());
    Ok(exit_for(&report))
}

fn valuate(a: &ValuateArgs) -> Result<ExitCode> {
    if let Some(json) = &a.wacc {
        let inputs: WaccInputs = serde_json::from_str(json).context("parsing --wacc")?;
        let value = wacc(&inputs)?;
        let v = inputs.debt_value + inputs.equity_value;
        println!("V = D + E = {}", v);
        println!("D/V = {} at rD = {}", inputs.debt_value / v, inputs.cost_of_debt);
        println!("E/V = {} at rE = {}", inputs.equity_value / v, inputs.cost_of_equity);
        println!("wacc = {value}");
    }
    if let Some(json) = &a.dcf {
        let inputs: DcfInputs = serde_json::from_str(json).context("parsing --dcf")?;
        let value = dcf_value(&inputs)?;
        let growth = 1.0 + inputs.discount_rate;
        let mut factor = 1.0;
        for (t, cf) in inputs.fcf.iter().enumerate() {
            println!("t = {t}: fcf {cf} -> pv {}", cf / factor);
            factor *= growth;
        }
        println!(
            "terminal {} -> pv {}",
            inputs.terminal_value,
            inputs.terminal_value / factor
        );
        println!("value = {value}");
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => FileConfig::read(path)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Synth(a) => synth(&file, a),
        Command::Features(a) => features(&file, a),
        Command::Train(a) => train(&file, a),
        Command::Evaluate(a) => evaluate(&file, a),
        Command::Explain(a) => explain(&file, a),
        Command::Report(a) => report(a),
        Command::Valuate(a) => valuate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.jobs {
        Some(0) => Err(anyhow::anyhow!("--jobs must be at least 1")),
        Some(jobs) => par::with_width(jobs, || run(cli)),
        None => run(cli),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
