use ndarray::ArrayView2;
use rand::seq::SliceRandom;

use super::model::{MlpModel, Trace};
use super::train::loss_and_grad;
use super::Activation;
use crate::rng::seeded;
use crate::{Error, Result};

const STEP: f64 = 1e-5;
const MIN_CHECKED: usize = 128;
/// Gradients smaller than this are compared in absolute terms.
const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters skipped because a perturbation crossed a relu kink.
    pub skipped_kinks: usize,
}

fn relu_pattern(model: &MlpModel, trace: &Trace) -> Vec<bool> {
    model
        .layers
        .iter()
        .zip(&trace.caches)
        .filter(|(l, _)| l.activation == Some(Activation::Relu))
        .flat_map(|(_, c)| c.pre_act.iter().map(|v| *v > 0.0).collect::<Vec<_>>())
        .collect()
}

/// Compares backpropagated gradients of the penalized training loss with
/// central differences on a seeded sample of at least 128 parameters (all of
/// them when the model is smaller). Batch norm runs in training mode; the
/// running statistics are never touched.
pub fn gradient_check(
    model: &MlpModel,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    l2_penalty: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if x.nrows() == 0 {
        return Err(Error::Validation("gradient check needs at least one row".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if x.ncols() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            actual: x.ncols(),
        });
    }
    let (_, analytic, trace) = loss_and_grad(model, x, y, l2_penalty, true);
    let base_pattern = relu_pattern(model, &trace);
    let params = model.params_flat();
    let mut order: Vec<usize> = (0..params.len()).collect();
    order.shuffle(&mut seeded(seed));

    let mut probe = model.clone();
    let mut flat = params.clone();
    let mut eval = |i: usize, value: f64| -> Result<(f64, Vec<bool>)> {
        flat[i] = value;
        probe.set_params_flat(&flat)?;
        flat[i] = params[i];
        let (loss, _, t) = loss_and_grad(&probe, x, y, l2_penalty, true);
        Ok((loss, relu_pattern(&probe, &t)))
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    for &i in &order {
        if report.checked >= MIN_CHECKED {
            break;
        }
        let (up, p_up) = eval(i, params[i] + STEP)?;
        let (down, p_down) = eval(i, params[i] - STEP)?;
        if p_up != base_pattern || p_down != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        report.max_relative_error = report.max_relative_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}
