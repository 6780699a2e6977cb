use ndarray::{Array1, ArrayView2};
use rand::seq::SliceRandom;

use super::model::{gather_rows, LayerGrads, MlpModel, Trace};
use super::MlpConfig;
use crate::features::FeatureMatrix;
use crate::rng::{derive, seeded};
use crate::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean minibatch loss (including the penalty) for each epoch.
    pub epoch_losses: Vec<f64>,
}

fn flatten(grads: &[LayerGrads]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend(g.weights.iter());
        if let Some(b) = &g.bias {
            out.extend(b.iter());
        }
        if let (Some(gm), Some(bt)) = (&g.gamma, &g.beta) {
            out.extend(gm.iter());
            out.extend(bt.iter());
        }
    }
    out
}

/// Penalized loss and its gradient in flat parameter order.
pub(crate) fn loss_and_grad(
    model: &MlpModel,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    l2_penalty: f64,
    training: bool,
) -> (f64, Vec<f64>, Trace) {
    let trace = model.forward_trace(x, training);
    let n = y.len() as f64;
    let resid: Array1<f64> = trace.output.iter().zip(y).map(|(p, t)| p - t).collect();
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / n + l2_penalty * model.weight_sq_norm();
    let d_out = resid.mapv(|r| 2.0 * r / n);
    let mut grads = model.backward(&trace, &d_out, training);
    if l2_penalty > 0.0 {
        for (g, layer) in grads.iter_mut().zip(&model.layers) {
            g.weights.scaled_add(2.0 * l2_penalty, &layer.weights);
        }
    }
    (loss, flatten(&grads), trace)
}

pub fn mlp_train(model: MlpModel, train: &FeatureMatrix, config: &MlpConfig) -> Result<TrainOutcome> {
    let x = ArrayView2::from_shape((train.n_rows(), train.n_features()), &train.x)
        .map_err(|e| Error::Validation(e.to_string()))?;
    mlp_train_arrays(model, x, &train.targets, config)
}

pub fn mlp_train_arrays(
    mut model: MlpModel,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    config: &MlpConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if x.ncols() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            actual: x.ncols(),
        });
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if config.epochs > 0 && y.is_empty() {
        return Err(Error::Validation("cannot train on zero rows".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data".into()));
    }

    let mut rng = seeded(derive(config.seed, "mlp/shuffle"));
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut params = model.params_flat();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut step = 0i32;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            let xb = gather_rows(x, idx);
            let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let (loss, grad, trace) = loss_and_grad(&model, xb.view(), &yb, config.l2_penalty, true);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: config.learning_rate,
                });
            }
            model.update_running_stats(&trace);
            step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(step);
            let c2 = 1.0 - ADAM_BETA2.powi(step);
            for i in 0..params.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                params[i] -= config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
            model.set_params_flat(&params)?;
            total += loss;
            batches += 1;
        }
        let epoch_loss = total / batches as f64;
        if !epoch_loss.is_finite() || !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                learning_rate: config.learning_rate,
            });
        }
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainOutcome { model, epoch_losses })
}
