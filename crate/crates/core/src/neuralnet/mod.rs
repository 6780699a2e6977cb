//! Fully connected regression networks.
//!
//! Each hidden layer is `affine -> [batch norm] -> activation`; the output
//! head is a single linear unit. Layers followed by batch normalization carry
//! no bias (the normalization would cancel it). Weights use He-normal
//! initialization, `N(0, 2 / fan_in)`, and biases start at zero.
//!
//! Training minimizes `mean((y_hat - y)^2) + l2_penalty * sum(||W||^2)` with
//! Adam (`beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`, bias-corrected) over
//! mini-batches reshuffled every epoch.
//!
//! Flattened parameter layout, used for serialization and gradient checks:
//! for each layer in order, the weight matrix in row-major `(fan_in, fan_out)`
//! order, then the bias (if any), then batch-norm scale and shift (if any).

mod gradcheck;
mod model;
mod train;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{mlp_forward, mlp_init, BatchNorm, Layer, MlpModel, BN_EPSILON, BN_MOMENTUM};
pub use train::{mlp_train, mlp_train_arrays, TrainOutcome};

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 2] = [Activation::Relu, Activation::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub batch_norm: Vec<bool>,
    pub l2_penalty: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Inputs are clamped to `[-c, c]` before the first layer.
    #[serde(default)]
    pub input_clip: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Shallow,
    Deep,
}

impl Preset {
    pub const WIDTHS: RangeInclusive<usize> = 256..=1024;

    pub fn depths(self) -> RangeInclusive<usize> {
        match self {
            Preset::Shallow => 1..=2,
            Preset::Deep => 3..=5,
        }
    }

    pub fn admits(self, config: &MlpConfig) -> bool {
        self.depths().contains(&config.hidden_layer_sizes.len())
            && config.hidden_layer_sizes.iter().all(|w| Self::WIDTHS.contains(w))
    }
}

impl MlpConfig {
    /// A network with the given widths, all relu, no batch norm.
    pub fn with_layers(sizes: &[usize]) -> Self {
        Self {
            hidden_layer_sizes: sizes.to_vec(),
            activations: vec![Activation::Relu; sizes.len()],
            batch_norm: vec![false; sizes.len()],
            l2_penalty: 1e-4,
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 20,
            seed: 0,
            input_clip: None,
        }
    }

    pub fn shallow() -> Self {
        Self::with_layers(&[512])
    }

    pub fn deep() -> Self {
        let mut c = Self::with_layers(&[256, 256, 256]);
        c.batch_norm = vec![true; 3];
        c
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Shallow => Self::shallow(),
            Preset::Deep => Self::deep(),
        }
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_layer_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.hidden_layer_sizes.len();
        if self.activations.len() != n || self.batch_norm.len() != n {
            return Err(Error::Config(format!(
                "{n} hidden layers but {} activations and {} batch-norm flags",
                self.activations.len(),
                self.batch_norm.len()
            )));
        }
        if self.hidden_layer_sizes.contains(&0) {
            return Err(Error::Config("hidden layer width must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::Config("l2_penalty must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.input_clip.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Config("input_clip must be > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_respect_structural_ranges() {
        assert!(Preset::Shallow.admits(&MlpConfig::shallow()));
        assert!(Preset::Deep.admits(&MlpConfig::deep()));
        assert!(!Preset::Deep.admits(&MlpConfig::shallow()));
        assert!(!Preset::Shallow.admits(&MlpConfig::with_layers(&[128])));
        MlpConfig::deep().validate().unwrap();
    }

    #[test]
    fn mismatched_flags_rejected() {
        let mut c = MlpConfig::with_layers(&[4, 4]);
        c.batch_norm.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn activation_names_round_trip() {
        for a in Activation::ALL {
            assert_eq!(Activation::parse(a.name()).unwrap(), a);
        }
        assert!(Activation::parse("sigmoid").is_err());
    }
}
