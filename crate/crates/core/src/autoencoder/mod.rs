//! Anchor autoencoder.
//!
//! A fully connected encoder-decoder trained to reproduce seed-data
//! embeddings. Hidden layers use the configured activation; the output layer
//! is linear because targets are signed unit vectors. A request's
//! reconstruction similarity is `cosine(e, ê)`; poorly reconstructed requests
//! are the outliers the stream module collects.
//!
//! Weights are stored input-major: layer `l` maps a row vector `a` to
//! `a · W + b` with `W` of shape `(fan_in, fan_out)`.

mod persist;
mod train;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_unchecked, EmbeddingVector};
use crate::error::{Error, Result};

pub use persist::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{loss_gradient, mean_loss, train_anchor, Gradient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            input_dim: crate::embedding::DEFAULT_DIM,
            hidden_dims: vec![600, 150, 600],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl AutoencoderConfig {
    /// Small network used for desk-scale simulations.
    pub fn desk(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![64, 24, 64],
            epochs: 100,
            learning_rate: 3e-3,
            batch_size: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be positive");
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return bad("hidden_dims must be non-empty and positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        Ok(())
    }

    /// Layer widths from input to output, `[d, h1, ..., hk, d]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden_dims);
        w.push(self.input_dim);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

/// A trained (or hand-built) autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorModel {
    layers: Vec<Layer>,
    config: AutoencoderConfig,
    training_loss_trace: Vec<f64>,
}

impl AnchorModel {
    /// Assembles a model from explicit layers, checking that shapes chain
    /// from `config.input_dim` through `config.hidden_dims` and back.
    pub fn from_layers(config: AutoencoderConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        let widths = config.widths();
        if layers.len() != widths.len() - 1 {
            return Err(Error::InvalidConfig(format!(
                "expected {} layers, got {}",
                widths.len() - 1,
                layers.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.fan_in() != widths[l]
                || layer.fan_out() != widths[l + 1]
                || layer.biases.len() != widths[l + 1]
            {
                return Err(Error::InvalidConfig(format!(
                    "layer {l} has shape {}x{} (bias {}), expected {}x{}",
                    layer.fan_in(),
                    layer.fan_out(),
                    layer.biases.len(),
                    widths[l],
                    widths[l + 1]
                )));
            }
        }
        Ok(Self {
            layers,
            config,
            training_loss_trace: Vec::new(),
        })
    }

    /// All-zero weights and biases.
    pub fn zeros(config: AutoencoderConfig) -> Result<Self> {
        let widths = config.widths();
        let layers = widths
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                biases: Array1::zeros(w[1]),
            })
            .collect();
        Self::from_layers(config, layers)
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn training_loss_trace(&self) -> &[f64] {
        &self.training_loss_trace
    }

    pub(crate) fn set_loss_trace(&mut self, trace: Vec<f64>) {
        self.training_loss_trace = trace;
    }

    /// Rounds every parameter to the nearest `f32`, the precision models are
    /// persisted at, so a saved model reloads bit-for-bit.
    pub fn quantize_to_f32(&mut self) {
        for layer in &mut self.layers {
            layer.weights.mapv_inplace(|w| w as f32 as f64);
            layer.biases.mapv_inplace(|b| b as f32 as f64);
        }
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.input_dim() {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: self.input_dim(),
                found,
            });
        }
        Ok(())
    }

    /// Single-vector forward pass. Depends only on `x`, never on batch
    /// composition.
    pub(crate) fn forward_one(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            z += &layer.biases;
            if l != last {
                let act = self.config.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            a = z;
        }
        a
    }

    /// Batch forward pass returning the activations of every layer,
    /// `acts[0]` being the input itself.
    pub(crate) fn forward_batch(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.weights);
            z += &layer.biases.view().insert_axis(Axis(0));
            if l != last {
                let act = self.config.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            acts.push(z);
        }
        acts
    }

    /// Reconstruction `ê` of `e`, not re-normalized.
    pub fn reconstruct(&self, e: &EmbeddingVector) -> Result<EmbeddingVector> {
        self.check_dim(e.dim())?;
        let out = self.forward_one(ArrayView1::from(e.as_slice()));
        EmbeddingVector::from_raw(out.to_vec())
    }

    /// `cosine(e, ê)`.
    pub fn reconstruction_similarity(&self, e: &EmbeddingVector) -> Result<f64> {
        self.check_dim(e.dim())?;
        let out = self.forward_one(ArrayView1::from(e.as_slice()));
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        Ok(cosine_unchecked(e.as_slice(), out.as_slice().expect("contiguous")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    fn tiny_config() -> AutoencoderConfig {
        AutoencoderConfig {
            input_dim: 4,
            hidden_dims: vec![3],
            batch_size: 1,
            ..AutoencoderConfig::default()
        }
    }

    #[test]
    fn zero_weights_reconstruct_to_output_bias() {
        let mut m = AnchorModel::zeros(tiny_config()).unwrap();
        let bias = Array1::from(vec![0.5, -1.0, 2.0, 0.0]);
        m.layers_mut()[1].biases = bias.clone();
        let e = EmbeddingVector::normalized(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let out = m.reconstruct(&e).unwrap();
        assert_eq!(out.as_slice(), bias.as_slice().unwrap());
    }

    #[test]
    fn random_model_gives_finite_output_of_input_dim() {
        let mut rng = rng_from(3, &[]);
        let mut m = AnchorModel::zeros(tiny_config()).unwrap();
        for layer in m.layers_mut() {
            layer.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            layer.biases.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        let e = EmbeddingVector::normalized(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let out = m.reconstruct(&e).unwrap();
        assert_eq!(out.dim(), 4);
        let s = m.reconstruction_similarity(&e).unwrap();
        assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = AnchorModel::zeros(tiny_config()).unwrap();
        let e = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            m.reconstruct(&e),
            Err(Error::DimensionMismatch { expected: 4, found: 2, .. })
        ));
    }

    #[test]
    fn layer_shapes_must_chain() {
        let cfg = tiny_config();
        let layers = vec![
            Layer {
                weights: Array2::zeros((4, 3)),
                biases: Array1::zeros(3),
            },
            Layer {
                weights: Array2::zeros((2, 4)),
                biases: Array1::zeros(4),
            },
        ];
        assert!(AnchorModel::from_layers(cfg, layers).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config();
        c.hidden_dims.clear();
        assert!(c.validate().is_err());
        let c = AutoencoderConfig {
            hidden_dims: vec![3, 0],
            ..tiny_config()
        };
        assert!(c.validate().is_err());
        assert_eq!(AutoencoderConfig::default().hidden_dims, vec![600, 150, 600]);
        assert_eq!(tiny_config().widths(), vec![4, 3, 4]);
    }
}
