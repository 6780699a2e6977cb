use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::tpe::{tpe_suggest, TpeConfig};
use super::{Params, SearchSpace, TrialRecord, TrialStatus};
use crate::rng::{derive_index, seeded};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grid,
    Tpe,
    Random,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Method::Grid),
            "tpe" => Ok(Method::Tpe),
            "random" => Ok(Method::Random),
            other => Err(Error::Config(format!("unknown search method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub n_trials: usize,
    pub method: Method,
    pub seed: u64,
    pub tpe: TpeConfig,
    /// Trials dispatched together from one history snapshot.
    pub batch_width: usize,
    /// Append-only trial log; existing records are resumed from.
    pub trials_path: Option<PathBuf>,
    /// Points evaluated first, ahead of any sampled ones.
    #[serde(default)]
    pub initial: Vec<Params>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            n_trials: 50,
            method: Method::Tpe,
            seed: 0,
            tpe: TpeConfig::default(),
            batch_width: 4,
            trials_path: None,
            initial: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrialRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            line: i as u64 + 1,
            column: "record".into(),
            message: e.to_string(),
        })?;
        if rec.index != out.len() {
            return Err(Error::Validation(format!(
                "{}: expected trial {} but found {}",
                path.display(),
                out.len(),
                rec.index
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

fn run_trial<F>(index: usize, params: Params, objective: &F) -> TrialRecord
where
    F: Fn(&Params) -> Result<f64> + Sync,
{
    let start = Instant::now();
    let result = objective(&params);
    let duration_s = start.elapsed().as_secs_f64();
    let (objective, status, error) = match result {
        Ok(v) if v.is_finite() => (Some(v), TrialStatus::Ok, None),
        Ok(v) => (None, TrialStatus::Failed, Some(format!("non-finite objective {v}"))),
        Err(e) => (None, TrialStatus::Failed, Some(e.to_string())),
    };
    if let Some(e) = &error {
        log::warn!("trial {index} failed: {e}");
    }
    TrialRecord {
        index,
        params,
        objective,
        status,
        duration_s,
        error,
    }
}

fn best_of(history: &[TrialRecord]) -> Result<TrialRecord> {
    history
        .iter()
        .filter_map(|t| t.ok_objective().map(|v| (t, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.index.cmp(&b.0.index)))
        .map(|(t, _)| t.clone())
        .ok_or(Error::AllTrialsFailed(history.len()))
}

/// Runs the search loop. Trials start with `config.initial` (ignored for
/// grids); trial `j` draws its randomness from
/// `derive_index(seed, j)` and sees the history of the first
/// `(j / batch_width) * batch_width` trials, so the sequence is independent
/// of thread count and of where a resumed run was interrupted.
pub fn optimize<F>(space: &SearchSpace, objective: F, config: &OptimizeConfig) -> Result<OptimizeOutcome>
where
    F: Fn(&Params) -> Result<f64> + Sync,
{
    space.validate()?;
    if config.n_trials == 0 {
        return Err(Error::Config("n_trials must be >= 1".into()));
    }
    if !(config.tpe.gamma > 0.0 && config.tpe.gamma < 1.0) {
        return Err(Error::Config("gamma must lie in (0, 1)".into()));
    }
    let width = config.batch_width.max(1);
    let grid = match config.method {
        Method::Grid => Some(space.grid()?),
        _ => None,
    };
    let n_trials = grid.as_ref().map_or(config.n_trials, |g| g.len().min(config.n_trials));
    if let Some(bad) = config.initial.iter().find(|p| !space.contains(p)) {
        return Err(Error::Config(format!(
            "initial point {bad:?} lies outside the search space"
        )));
    }

    let mut history = match &config.trials_path {
        Some(p) if p.exists() => read_trials(p)?,
        _ => Vec::new(),
    };
    history.truncate(n_trials);
    if let Some(bad) = history.iter().find(|t| !space.contains(&t.params)) {
        return Err(Error::Validation(format!(
            "persisted trial {} does not belong to the search space",
            bad.index
        )));
    }
    let mut sink = match &config.trials_path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Some(OpenOptions::new().create(true).append(true).open(p)?)
        }
        None => None,
    };
    if !history.is_empty() {
        log::info!("resuming search at trial {}", history.len());
    }

    while history.len() < n_trials {
        let start = history.len();
        let end = ((start / width + 1) * width).min(n_trials);
        let snapshot = &history[..(start / width) * width];
        let proposals: Vec<(usize, Params)> = (start..end)
            .map(|j| {
                let mut rng = seeded(derive_index(config.seed, j as u64));
                let p = match (&grid, config.method) {
                    (Some(g), _) => g[j].clone(),
                    (None, _) if j < config.initial.len() => config.initial[j].clone(),
                    (None, Method::Tpe) => tpe_suggest(snapshot, space, &config.tpe, &mut rng),
                    (None, _) => space.sample_prior(&mut rng),
                };
                (j, p)
            })
            .collect();
        let results = par::map_slice(&proposals, |(j, p)| run_trial(*j, p.clone(), &objective));
        if let Some(f) = sink.as_mut() {
            for r in &results {
                writeln!(f, "{}", serde_json::to_string(r)?)?;
            }
            f.flush()?;
        }
        history.extend(results);
    }
    let best = best_of(&history)?;
    log::info!(
        "search finished: {} trials, best objective {:.6} at trial {}",
        history.len(),
        best.objective.unwrap_or(f64::NAN),
        best.index
    );
    Ok(OptimizeOutcome { best, history })
}

/// Evaluates every grid point in lexicographic order.
pub fn grid_search<F>(space: &SearchSpace, objective: F) -> Result<OptimizeOutcome>
where
    F: Fn(&Params) -> Result<f64> + Sync,
{
    let n = space.grid()?.len();
    optimize(
        space,
        objective,
        &OptimizeConfig {
            n_trials: n,
            method: Method::Grid,
            ..OptimizeConfig::default()
        },
    )
}
