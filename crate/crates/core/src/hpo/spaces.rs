use super::{Dimension, ParamValue, Params, SearchSpace};
use crate::boosting::GbtParams;
use crate::neuralnet::{Activation, MlpConfig, Preset};
use crate::{Error, Result};

pub fn gbt_space() -> SearchSpace {
    SearchSpace::new()
        .with("n_estimators", Dimension::Integer { lo: 50, hi: 500 })
        .with("max_depth", Dimension::Integer { lo: 2, hi: 8 })
        .with("learning_rate", Dimension::LogUniform { lo: 0.01, hi: 0.3 })
        .with("l2_leaf_penalty", Dimension::LogUniform { lo: 1e-3, hi: 10.0 })
        .with("subsample_rows", Dimension::Uniform { lo: 0.5, hi: 1.0 })
        .with("subsample_features", Dimension::Uniform { lo: 0.5, hi: 1.0 })
}

pub fn ngboost_grid() -> SearchSpace {
    let reals = |v: &[f64]| Dimension::Categorical {
        choices: v.iter().map(|x| ParamValue::Real(*x)).collect(),
    };
    let ints = |v: &[i64]| Dimension::Categorical {
        choices: v.iter().map(|x| ParamValue::Int(*x)).collect(),
    };
    SearchSpace::new()
        .with("n_estimators", ints(&[200, 500]))
        .with("max_depth", ints(&[2, 3]))
        .with("learning_rate", reals(&[0.01, 0.05]))
}

/// Structural ranges of the preset plus penalty and step size. Per-layer
/// dimensions exist for the deepest admissible network; layers beyond
/// `n_layers` are ignored.
pub fn fnn_space(preset: Preset) -> SearchSpace {
    let depths = preset.depths();
    let mut s = SearchSpace::new().with(
        "n_layers",
        Dimension::Integer {
            lo: *depths.start() as i64,
            hi: *depths.end() as i64,
        },
    );
    for i in 0..*depths.end() {
        s = s
            .with(
                &format!("width_{i}"),
                Dimension::Integer {
                    lo: *Preset::WIDTHS.start() as i64,
                    hi: *Preset::WIDTHS.end() as i64,
                },
            )
            .with(
                &format!("activation_{i}"),
                Dimension::Categorical {
                    choices: Activation::ALL
                        .iter()
                        .map(|a| ParamValue::Text(a.name().into()))
                        .collect(),
                },
            )
            .with(
                &format!("batch_norm_{i}"),
                Dimension::Categorical {
                    choices: vec![ParamValue::Bool(false), ParamValue::Bool(true)],
                },
            );
    }
    s.with("l2_penalty", Dimension::LogUniform { lo: 1e-6, hi: 1e-2 })
        .with("learning_rate", Dimension::LogUniform { lo: 3e-4, hi: 3e-3 })
}

/// Penalty, step size and one activation and normalization choice shared by
/// all layers, with the architecture held fixed.
pub fn fnn_tuning_space() -> SearchSpace {
    SearchSpace::new()
        .with(
            "activation",
            Dimension::Categorical {
                choices: Activation::ALL
                    .iter()
                    .map(|a| ParamValue::Text(a.name().into()))
                    .collect(),
            },
        )
        .with(
            "batch_norm",
            Dimension::Categorical {
                choices: vec![ParamValue::Bool(false), ParamValue::Bool(true)],
            },
        )
        .with("l2_penalty", Dimension::LogUniform { lo: 1e-6, hi: 1e-2 })
        .with("learning_rate", Dimension::LogUniform { lo: 3e-4, hi: 3e-3 })
}

/// The values of `space`'s dimensions implied by `full`, or `None` when a
/// dimension is missing from `full` or the value lies outside the space.
fn project(full: Params, space: &SearchSpace) -> Option<Params> {
    let p: Params = space
        .dims
        .iter()
        .map(|(name, _)| full.get(name).map(|v| (name.clone(), v.clone())))
        .collect::<Option<_>>()?;
    space.contains(&p).then_some(p)
}

/// `params` expressed as a point of `space`, if it is one.
pub fn gbt_params_point(params: &GbtParams, space: &SearchSpace) -> Option<Params> {
    let full: Params = [
        ("n_estimators", ParamValue::Int(params.n_estimators as i64)),
        ("max_depth", ParamValue::Int(params.max_depth as i64)),
        ("min_samples_leaf", ParamValue::Int(params.min_samples_leaf as i64)),
        ("learning_rate", ParamValue::Real(params.learning_rate)),
        ("l2_leaf_penalty", ParamValue::Real(params.l2_leaf_penalty)),
        ("subsample_rows", ParamValue::Real(params.subsample_rows)),
        ("subsample_features", ParamValue::Real(params.subsample_features)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    project(full, space)
}

/// `config` expressed as a point of `space`, if it is one. Layers beyond the
/// network's depth take the last layer's settings.
pub fn mlp_config_point(config: &MlpConfig, space: &SearchSpace) -> Option<Params> {
    let n = config.n_hidden();
    let mut full = Params::new();
    full.insert("n_layers".into(), ParamValue::Int(n as i64));
    full.insert("l2_penalty".into(), ParamValue::Real(config.l2_penalty));
    full.insert("learning_rate".into(), ParamValue::Real(config.learning_rate));
    full.insert("epochs".into(), ParamValue::Int(config.epochs as i64));
    full.insert("batch_size".into(), ParamValue::Int(config.batch_size as i64));
    if n > 0 {
        for i in 0..(*Preset::Deep.depths().end()).max(n) {
            let j = i.min(n - 1);
            full.insert(
                format!("width_{i}"),
                ParamValue::Int(config.hidden_layer_sizes[j] as i64),
            );
            full.insert(
                format!("activation_{i}"),
                ParamValue::Text(config.activations[j].name().into()),
            );
            full.insert(format!("batch_norm_{i}"), ParamValue::Bool(config.batch_norm[j]));
        }
        if config.activations.iter().all(|a| *a == config.activations[0]) {
            full.insert(
                "activation".into(),
                ParamValue::Text(config.activations[0].name().into()),
            );
        }
        if config.batch_norm.iter().all(|b| *b == config.batch_norm[0]) {
            full.insert("batch_norm".into(), ParamValue::Bool(config.batch_norm[0]));
        }
    }
    project(full, space)
}

fn real(p: &Params, key: &str) -> Result<Option<f64>> {
    p.get(key)
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| Error::Config(format!("`{key}` must be numeric, got {v}")))
        })
        .transpose()
}

fn count(p: &Params, key: &str) -> Result<Option<usize>> {
    p.get(key)
        .map(|v| {
            v.as_i64()
                .and_then(|n| usize::try_from(n).ok())
                .ok_or_else(|| Error::Config(format!("`{key}` must be a non-negative integer, got {v}")))
        })
        .transpose()
}

/// Overrides the fields of `base` named in `p`.
pub fn gbt_params_from(p: &Params, base: &GbtParams) -> Result<GbtParams> {
    let mut out = base.clone();
    if let Some(v) = count(p, "n_estimators")? {
        out.n_estimators = v;
    }
    if let Some(v) = count(p, "max_depth")? {
        out.max_depth = v;
    }
    if let Some(v) = count(p, "min_samples_leaf")? {
        out.min_samples_leaf = v;
    }
    if let Some(v) = real(p, "learning_rate")? {
        out.learning_rate = v;
    }
    if let Some(v) = real(p, "l2_leaf_penalty")? {
        out.l2_leaf_penalty = v;
    }
    if let Some(v) = real(p, "subsample_rows")? {
        out.subsample_rows = v;
    }
    if let Some(v) = real(p, "subsample_features")? {
        out.subsample_features = v;
    }
    out.validate()?;
    Ok(out)
}

pub fn mlp_config_from(p: &Params, base: &MlpConfig) -> Result<MlpConfig> {
    let mut out = base.clone();
    if let Some(n) = count(p, "n_layers")? {
        let fallback = |i: usize| i.min(base.n_hidden().saturating_sub(1));
        let mut sizes = Vec::with_capacity(n);
        let mut acts = Vec::with_capacity(n);
        let mut bns = Vec::with_capacity(n);
        for i in 0..n {
            let j = fallback(i);
            sizes.push(match count(p, &format!("width_{i}"))? {
                Some(w) => w,
                None => *base
                    .hidden_layer_sizes
                    .get(j)
                    .ok_or_else(|| Error::Config(format!("no width for layer {i}")))?,
            });
            acts.push(match p.get(&format!("activation_{i}")) {
                Some(v) => Activation::parse(&v.to_string())?,
                None => base.activations.get(j).copied().unwrap_or(Activation::Relu),
            });
            bns.push(match p.get(&format!("batch_norm_{i}")) {
                Some(ParamValue::Bool(b)) => *b,
                Some(v) => return Err(Error::Config(format!("batch_norm_{i} must be boolean, got {v}"))),
                None => base.batch_norm.get(j).copied().unwrap_or(false),
            });
        }
        out.hidden_layer_sizes = sizes;
        out.activations = acts;
        out.batch_norm = bns;
    }
    if let Some(v) = p.get("activation") {
        let a = Activation::parse(&v.to_string())?;
        out.activations.iter_mut().for_each(|x| *x = a);
    }
    match p.get("batch_norm") {
        Some(ParamValue::Bool(b)) => out.batch_norm.iter_mut().for_each(|x| *x = *b),
        Some(v) => return Err(Error::Config(format!("batch_norm must be boolean, got {v}"))),
        None => {}
    }
    if let Some(v) = real(p, "l2_penalty")? {
        out.l2_penalty = v;
    }
    if let Some(v) = real(p, "learning_rate")? {
        out.learning_rate = v;
    }
    if let Some(v) = count(p, "epochs")? {
        out.epochs = v;
    }
    if let Some(v) = count(p, "batch_size")? {
        out.batch_size = v;
    }
    out.validate()?;
    Ok(out)
}
