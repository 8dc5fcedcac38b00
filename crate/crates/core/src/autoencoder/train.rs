//! Backpropagation and Adam training for the anchor autoencoder.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{AnchorModel, AutoencoderConfig, Layer};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Gradient of the mean reconstruction loss, one entry per layer, shaped
/// like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub layers: Vec<Layer>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|g| g.weights.iter().chain(g.biases.iter()).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn stack(batch: &[EmbeddingVector], dim: usize) -> Result<Array2<f64>> {
    let mut x = Array2::zeros((batch.len(), dim));
    for (i, (mut row, e)) in x.rows_mut().into_iter().zip(batch).enumerate() {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                index: i,
                expected: dim,
                found: e.dim(),
            });
        }
        row.assign(&ndarray::ArrayView1::from(e.as_slice()));
    }
    Ok(x)
}

/// Loss `J = (1/n) Σ ½‖ê_i − e_i‖²` and its gradient for a stacked batch.
pub(crate) fn gradient_of(model: &AnchorModel, x: &Array2<f64>) -> Gradient {
    let n = x.nrows() as f64;
    let acts = model.forward_batch(x);
    let last = model.layers.len();
    let residual = &acts[last] - x;
    let loss = 0.5 * residual.iter().map(|r| r * r).sum::<f64>() / n;

    let mut delta = residual / n;
    let mut grads: Vec<Layer> = Vec::with_capacity(last);
    for l in (0..last).rev() {
        let weights = acts[l].t().dot(&delta);
        let biases = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&model.layers[l].weights.t());
            let act = model.config.activation;
            ndarray::Zip::from(&mut back)
                .and(&acts[l])
                .for_each(|d, &y| *d *= act.derivative_from_output(y));
            delta = back;
        }
        grads.push(Layer { weights, biases });
    }
    grads.reverse();
    Gradient { loss, layers: grads }
}

/// Gradient of the mean squared reconstruction error over `batch` with
/// respect to every weight and bias.
pub fn loss_gradient(model: &AnchorModel, batch: &[EmbeddingVector]) -> Result<Gradient> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("gradient batch"));
    }
    let x = stack(batch, model.input_dim())?;
    let g = gradient_of(model, &x);
    for (layer, lg) in g.layers.iter().enumerate() {
        if lg.weights.iter().chain(lg.biases.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { layer });
        }
    }
    Ok(g)
}

/// Mean reconstruction loss over a set of vectors.
pub fn mean_loss(model: &AnchorModel, data: &[EmbeddingVector]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("loss data"));
    }
    let x = stack(data, model.input_dim())?;
    let out = model.forward_batch(&x).pop().expect("output layer");
    Ok(0.5 * (&out - &x).iter().map(|r| r * r).sum::<f64>() / x.nrows() as f64)
}

fn glorot_init(config: &AutoencoderConfig) -> Result<AnchorModel> {
    let mut rng = rng_from(config.seed, &[stream::INIT]);
    let layers = config
        .widths()
        .windows(2)
        .map(|w| {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            Layer {
                weights: Array2::from_shape_simple_fn((w[0], w[1]), || {
                    rng.random_range(-limit..limit)
                }),
                biases: Array1::zeros(w[1]),
            }
        })
        .collect();
    AnchorModel::from_layers(config.clone(), layers)
}

struct Moments {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: i32,
}

impl Moments {
    fn new(model: &AnchorModel) -> Self {
        let zeros = || {
            model
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.len()),
                })
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn apply(&mut self, model: &mut AnchorModel, grad: &Gradient, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let step_size = lr * c2.sqrt() / c1;
        for (((p, g), m), v) in model
            .layers
            .iter_mut()
            .zip(&grad.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            adam_update(&mut p.weights, &g.weights, &mut m.weights, &mut v.weights, step_size, c2);
            adam_update(&mut p.biases, &g.biases, &mut m.biases, &mut v.biases, step_size, c2);
        }
    }
}

fn adam_update<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    step_size: f64,
    c2: f64,
) {
    // Equivalent to lr * m̂ / (sqrt(v̂) + ε) with ε applied to the
    // bias-corrected second moment.
    let eps = EPSILON * c2.sqrt();
    ndarray::Zip::from(param)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= step_size * *m / (v.sqrt() + eps);
        });
}

/// Trains the anchor autoencoder on seed-data embeddings.
///
/// Initialization is Glorot-uniform from the config seed, mini-batch order is
/// reshuffled each epoch from a seed-derived stream, and training always runs
/// the configured number of epochs. The returned model is rounded to `f32`
/// precision (see [`AnchorModel::quantize_to_f32`]).
pub fn train_anchor(seed_data: &[EmbeddingVector], config: &AutoencoderConfig) -> Result<AnchorModel> {
    config.validate()?;
    if seed_data.is_empty() {
        return Err(Error::EmptyInput("seed data"));
    }
    if seed_data.len() < config.batch_size {
        return Err(Error::InvalidConfig(format!(
            "seed data has {} vectors, fewer than batch_size {}",
            seed_data.len(),
            config.batch_size
        )));
    }
    let x = stack(seed_data, config.input_dim)?;
    let n = x.nrows();
    let mut model = glorot_init(config)?;
    let mut moments = Moments::new(&model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = rng_from(config.seed, &[stream::SHUFFLE, epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let grad = gradient_of(&model, &xb);
            if !grad.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            if let Some(layer) = grad
                .layers
                .iter()
                .position(|g| g.weights.iter().chain(g.biases.iter()).any(|v| !v.is_finite()))
            {
                return Err(Error::NonFiniteGradient { layer });
            }
            total += grad.loss * chunk.len() as f64;
            moments.apply(&mut model, &grad, config.learning_rate);
        }
        let epoch_loss = total / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log::trace!("epoch {epoch}: loss {epoch_loss:.6}");
        trace.push(epoch_loss);
    }
    model.quantize_to_f32();
    model.set_loss_trace(trace);
    Ok(model)
}
