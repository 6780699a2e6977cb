use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Activation, MlpConfig};
use crate::features::FeatureMatrix;
use crate::rng::{derive, seeded};
use crate::{par, Error, Result};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;
const MODEL_FORMAT_VERSION: u32 = 1;
const PREDICT_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn identity(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape `(fan_in, fan_out)`.
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub batch_norm: Option<BatchNorm>,
    /// `None` for the linear output head.
    pub activation: Option<Activation>,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    fn n_params(&self) -> usize {
        self.weights.len()
            + self.bias.as_ref().map_or(0, |b| b.len())
            + self.batch_norm.as_ref().map_or(0, |bn| 2 * bn.gamma.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub input_clip: Option<f64>,
}

pub fn mlp_init(config: &MlpConfig, input_dim: usize) -> Result<MlpModel> {
    config.validate()?;
    if input_dim == 0 {
        return Err(Error::Config("input_dim must be >= 1".into()));
    }
    let mut rng = seeded(derive(config.seed, "mlp/init"));
    let mut layers = Vec::with_capacity(config.n_hidden() + 1);
    let mut fan_in = input_dim;
    let widths = config.hidden_layer_sizes.iter().copied().chain(std::iter::once(1));
    for (l, fan_out) in widths.enumerate() {
        let hidden = l < config.n_hidden();
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::Numerical(e.to_string()))?;
        let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(&mut rng));
        let bn = hidden && config.batch_norm[l];
        layers.push(Layer {
            weights,
            bias: (!bn).then(|| Array1::zeros(fan_out)),
            batch_norm: bn.then(|| BatchNorm::identity(fan_out)),
            activation: hidden.then(|| config.activations[l]),
        });
        fan_in = fan_out;
    }
    Ok(MlpModel {
        input_dim,
        layers,
        input_clip: config.input_clip,
    })
}

pub(crate) struct LayerCache {
    pub input: Array2<f64>,
    pub xhat: Option<Array2<f64>>,
    pub inv_std: Option<Array1<f64>>,
    pub batch_mean: Option<Array1<f64>>,
    pub batch_var: Option<Array1<f64>>,
    /// Input to the activation (after batch norm).
    pub pre_act: Array2<f64>,
}

pub(crate) struct Trace {
    pub caches: Vec<LayerCache>,
    pub output: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerGrads {
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

fn activate(a: Activation, z: &Array2<f64>) -> Array2<f64> {
    match a {
        Activation::Relu => z.mapv(|v| v.max(0.0)),
        Activation::Tanh => z.mapv(f64::tanh),
    }
}

impl MlpModel {
    pub fn output_dim(&self) -> usize {
        1
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Forward pass keeping every intermediate needed by [`Self::backward`].
    /// Never mutates the model; running statistics are only read.
    pub(crate) fn forward_trace(&self, x: ArrayView2<'_, f64>, training: bool) -> Trace {
        let mut a = match self.input_clip {
            Some(c) => x.mapv(|v| v.clamp(-c, c)),
            None => x.to_owned(),
        };
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights);
            if let Some(b) = &layer.bias {
                z += b;
            }
            let mut cache = LayerCache {
                input: a,
                xhat: None,
                inv_std: None,
                batch_mean: None,
                batch_var: None,
                pre_act: Array2::zeros((0, 0)),
            };
            if let Some(bn) = &layer.batch_norm {
                let (mean, var) = if training {
                    let n = z.nrows() as f64;
                    let mean = z.sum_axis(Axis(0)) / n;
                    let centered = &z - &mean;
                    let var = (&centered * &centered).sum_axis(Axis(0)) / n;
                    (mean, var)
                } else {
                    (bn.running_mean.clone(), bn.running_var.clone())
                };
                let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
                let xhat = (&z - &mean) * &inv_std;
                z = &xhat * &bn.gamma + &bn.beta;
                cache.xhat = Some(xhat);
                cache.inv_std = Some(inv_std);
                cache.batch_mean = Some(mean);
                cache.batch_var = Some(var);
            }
            a = match layer.activation {
                Some(act) => activate(act, &z),
                None => z.clone(),
            };
            cache.pre_act = z;
            caches.push(cache);
        }
        Trace {
            caches,
            output: a.column(0).to_owned(),
        }
    }

    /// Gradients of a scalar loss given `d loss / d output` for each row.
    pub(crate) fn backward(&self, trace: &Trace, d_out: &Array1<f64>, training: bool) -> Vec<LayerGrads> {
        let n = d_out.len();
        let mut g = d_out.clone().into_shape_with_order((n, 1)).expect("column vector");
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let cache = &trace.caches[l];
            // d loss / d pre_act
            let mut d = match layer.activation {
                None => g,
                Some(Activation::Relu) => {
                    let mut d = g;
                    d.zip_mut_with(&cache.pre_act, |gv, &z| {
                        if z <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                    d
                }
                Some(Activation::Tanh) => {
                    let out = &trace
                        .caches
                        .get(l + 1)
                        .map(|c| c.input.view())
                        .expect("hidden layer feeds another layer");
                    let mut d = g;
                    d.zip_mut_with(out, |gv, &o| *gv *= 1.0 - o * o);
                    d
                }
            };
            let (mut gamma, mut beta) = (None, None);
            if let Some(bn) = &layer.batch_norm {
                let xhat = cache.xhat.as_ref().expect("batch-norm cache");
                let inv_std = cache.inv_std.as_ref().expect("batch-norm cache");
                gamma = Some((&d * xhat).sum_axis(Axis(0)));
                beta = Some(d.sum_axis(Axis(0)));
                let dxhat = &d * &bn.gamma;
                d = if training {
                    let m = n as f64;
                    let sum_dxhat = dxhat.sum_axis(Axis(0));
                    let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                    ((&dxhat * m - &sum_dxhat) - xhat * &sum_dxhat_xhat) * &(inv_std / m)
                } else {
                    dxhat * inv_std
                };
            }
            let weights = cache.input.t().dot(&d);
            let bias = layer.bias.as_ref().map(|_| d.sum_axis(Axis(0)));
            g = d.dot(&layer.weights.t());
            grads.push(LayerGrads {
                weights,
                bias,
                gamma,
                beta,
            });
        }
        grads.reverse();
        grads
    }

    /// Folds the batch statistics of a training trace into the running averages.
    pub(crate) fn update_running_stats(&mut self, trace: &Trace) {
        for (layer, cache) in self.layers.iter_mut().zip(&trace.caches) {
            if let (Some(bn), Some(mean), Some(var)) = (
                layer.batch_norm.as_mut(),
                cache.batch_mean.as_ref(),
                cache.batch_var.as_ref(),
            ) {
                bn.running_mean = &bn.running_mean * BN_MOMENTUM + mean * (1.0 - BN_MOMENTUM);
                bn.running_var = &bn.running_var * BN_MOMENTUM + var * (1.0 - BN_MOMENTUM);
            }
        }
    }

    pub(crate) fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            if let Some(b) = &l.bias {
                out.extend(b.iter());
            }
            if let Some(bn) = &l.batch_norm {
                out.extend(bn.gamma.iter());
                out.extend(bn.beta.iter());
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .for_each(|v| *v = it.next().expect("length checked"));
            if let Some(b) = &mut l.bias {
                b.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            }
            if let Some(bn) = &mut l.batch_norm {
                bn.gamma
                    .iter_mut()
                    .for_each(|v| *v = it.next().expect("length checked"));
                bn.beta.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            }
        }
        Ok(())
    }

    /// Indices into [`Self::params_flat`] that hold weight-matrix entries.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(std::iter::repeat_n(true, l.weights.len()));
            out.extend(std::iter::repeat_n(false, l.n_params() - l.weights.len()));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.params_flat().iter().all(|v| v.is_finite())
            && self.layers.iter().all(|l| {
                l.batch_norm.as_ref().is_none_or(|bn| {
                    bn.running_mean
                        .iter()
                        .chain(bn.running_var.iter())
                        .all(|v| v.is_finite())
                })
            })
    }

    /// Inference-mode predictions for a row-major matrix.
    pub fn predict_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim;
        if !x.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: x.len() % d,
            });
        }
        let n = x.len() / d;
        let chunks = n.div_ceil(PREDICT_CHUNK);
        let parts = par::map_range(chunks, |c| {
            let lo = c * PREDICT_CHUNK;
            let hi = (lo + PREDICT_CHUNK).min(n);
            let view = ArrayView2::from_shape((hi - lo, d), &x[lo * d..hi * d]).expect("shape checked");
            self.forward_trace(view, false).output.to_vec()
        });
        Ok(parts.concat())
    }

    pub fn predict(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if m.n_features() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: m.n_features(),
            });
        }
        self.predict_flat(&m.x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelRecord::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<ModelRecord>(s)?.try_into()
    }
}

/// Predictions for `x`; `training` selects batch statistics over running ones.
pub fn mlp_forward(model: &MlpModel, x: ArrayView2<'_, f64>, training: bool) -> Result<Array1<f64>> {
    model.check_input(&x)?;
    if x.nrows() == 0 {
        return Ok(Array1::zeros(0));
    }
    Ok(model.forward_trace(x, training).output)
}

#[derive(Serialize, Deserialize)]
struct BatchNormRecord {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    fan_in: usize,
    fan_out: usize,
    activation: Option<Activation>,
    /// Row-major `(fan_in, fan_out)`.
    weights: Vec<f64>,
    bias: Option<Vec<f64>>,
    batch_norm: Option<BatchNormRecord>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    format_version: u32,
    input_dim: usize,
    output_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_clip: Option<f64>,
    layers: Vec<LayerRecord>,
}

impl From<&MlpModel> for ModelRecord {
    fn from(m: &MlpModel) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            input_dim: m.input_dim,
            output_dim: m.output_dim(),
            input_clip: m.input_clip,
            layers: m
                .layers
                .iter()
                .map(|l| LayerRecord {
                    fan_in: l.fan_in(),
                    fan_out: l.fan_out(),
                    activation: l.activation,
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.as_ref().map(|b| b.to_vec()),
                    batch_norm: l.batch_norm.as_ref().map(|bn| BatchNormRecord {
                        gamma: bn.gamma.to_vec(),
                        beta: bn.beta.to_vec(),
                        running_mean: bn.running_mean.to_vec(),
                        running_var: bn.running_var.to_vec(),
                    }),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelRecord> for MlpModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        if r.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported model format version {}",
                r.format_version
            )));
        }
        let vector = |v: Vec<f64>, n: usize| -> Result<Array1<f64>> {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: v.len(),
                });
            }
            Ok(Array1::from(v))
        };
        let mut fan_in = r.input_dim;
        let mut layers = Vec::with_capacity(r.layers.len());
        for lr in r.layers {
            if lr.fan_in != fan_in {
                return Err(Error::DimensionMismatch {
                    expected: fan_in,
                    actual: lr.fan_in,
                });
            }
            let weights = Array2::from_shape_vec((lr.fan_in, lr.fan_out), lr.weights)
                .map_err(|e| Error::Validation(format!("weight matrix: {e}")))?;
            let bias = lr.bias.map(|b| vector(b, lr.fan_out)).transpose()?;
            let batch_norm = lr
                .batch_norm
                .map(|bn| -> Result<BatchNorm> {
                    Ok(BatchNorm {
                        gamma: vector(bn.gamma, lr.fan_out)?,
                        beta: vector(bn.beta, lr.fan_out)?,
                        running_mean: vector(bn.running_mean, lr.fan_out)?,
                        running_var: vector(bn.running_var, lr.fan_out)?,
                    })
                })
                .transpose()?;
            fan_in = lr.fan_out;
            layers.push(Layer {
                weights,
                bias,
                batch_norm,
                activation: lr.activation,
            });
        }
        if fan_in != 1 || r.output_dim != 1 || layers.is_empty() {
            return Err(Error::Validation("network must end in a single output".into()));
        }
        let model = MlpModel {
            input_dim: r.input_dim,
            layers,
            input_clip: r.input_clip,
        };
        if !model.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(model)
    }
}

/// Rows `idx` of a row-major matrix as an owned array.
pub(crate) fn gather_rows(x: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (dst, &i) in idx.iter().enumerate() {
        out.slice_mut(s![dst, ..]).assign(&x.row(i));
    }
    out
}
