//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Every classifier role in the pipeline and both halves of the generative
//! model are instances of [`ModelParams`]. Arithmetic is `f64` throughout so
//! finite-difference oracles can check gradients to tight tolerances.

mod checkpoint;
mod loss;
mod train;

pub(crate) use checkpoint::Reader;
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{argmax, mse, softmax, softmax_xent};
pub use train::{sgd_step, train_classifier, train_classifier_from, Dataset, TrainConfig};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
        }
    }

    /// Derivative expressed in terms of the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// One dense layer: `activation(W x + b)` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Layer widths and activations, without values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub layers: Vec<(usize, Activation)>,
}

impl Architecture {
    /// ReLU hidden layers followed by an output layer with `output_activation`.
    pub fn mlp(input_dim: usize, hidden: &[usize], output_dim: usize, output_activation: Activation) -> Self {
        let mut layers: Vec<(usize, Activation)> = hidden.iter().map(|&h| (h, Activation::Relu)).collect();
        layers.push((output_dim, output_activation));
        Architecture { input_dim, layers }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.0).unwrap_or(self.input_dim)
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("architecture input_dim must be positive"));
        }
        if self.layers.is_empty() {
            return Err(Error::invalid("architecture needs at least one layer"));
        }
        if self.layers.iter().any(|l| l.0 == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }
}

/// Weights and biases of a feed-forward network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    layers: Vec<Layer>,
}

impl ModelParams {
    /// Validates that adjacent layers chain and every value is finite.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("model needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::invalid(format!(
                    "layer {k}: bias length {} != out dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(Error::invalid(format!("layer {k}: empty weight matrix")));
            }
            if let Some(next) = layers.get(k + 1) {
                if next.in_dim() != layer.out_dim() {
                    return Err(Error::invalid(format!(
                        "layer {k} out dim {} does not chain into layer {} in dim {}",
                        layer.out_dim(),
                        k + 1,
                        next.in_dim()
                    )));
                }
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::numeric(None, format!("layer {k} has non-finite values")));
            }
        }
        Ok(ModelParams { layers })
    }

    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let mut fan_in = arch.input_dim;
        let layers = arch
            .layers
            .iter()
            .map(|&(out, activation)| {
                let layer = Layer {
                    weights: Array2::zeros((out, fan_in)),
                    bias: Array1::zeros(out),
                    activation,
                };
                fan_in = out;
                layer
            })
            .collect();
        ModelParams::new(layers)
    }

    /// Uniform `[-a, a]` weights with `a = scale / sqrt(fan_in)`; zero biases.
    pub fn init_uniform<R: Rng>(arch: &Architecture, scale: f64, rng: &mut R) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid("weight_init_scale must be positive"));
        }
        let mut params = ModelParams::zeros(arch)?;
        for layer in &mut params.layers {
            let a = scale / (layer.in_dim() as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.gen_range(-a..=a));
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim(),
            layers: self.layers.iter().map(|l| (l.out_dim(), l.activation)).collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Swap the two output units of a two-class model.
    pub fn mirrored_output(&self) -> Result<Self> {
        if self.output_dim() != 2 {
            return Err(Error::invalid("output mirroring needs exactly two outputs"));
        }
        let mut out = self.clone();
        let last = out.layers.last_mut().expect("non-empty");
        let (w0, w1) = (last.weights.row(0).to_owned(), last.weights.row(1).to_owned());
        last.weights.row_mut(0).assign(&w1);
        last.weights.row_mut(1).assign(&w0);
        last.bias.swap(0, 1);
        Ok(out)
    }
}

/// Everything backward needs from a forward pass over a batch.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer (`inputs[0]` is the network input).
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Parameter gradients (summed over the batch) plus the input gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn is_zero(&self) -> bool {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .chain(self.input.iter())
            .all(|v| v.is_finite())
    }
}

/// Single-sample forward pass. Returns the network output and its cache.
pub fn forward(params: &ModelParams, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::invalid(e.to_string()))?;
    let cache = forward_batch(params, x)?;
    Ok((cache.output.row(0).to_vec(), cache))
}

/// Forward pass over a `batch × input_dim` matrix.
pub fn forward_batch(params: &ModelParams, input: ArrayView2<'_, f64>) -> Result<ForwardCache> {
    if input.ncols() != params.input_dim() {
        return Err(Error::invalid(format!(
            "input dim {} != model input dim {}",
            input.ncols(),
            params.input_dim()
        )));
    }
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut current = input.to_owned();
    for layer in &params.layers {
        let mut z = current.dot(&layer.weights.t());
        z += &layer.bias;
        layer.activation.apply(&mut z);
        inputs.push(current);
        current = z;
    }
    Ok(ForwardCache {
        inputs,
        output: current,
    })
}

/// Forward pass that skips the cache, for inference.
pub fn infer_batch(params: &ModelParams, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if input.ncols() != params.input_dim() {
        return Err(Error::invalid(format!(
            "input dim {} != model input dim {}",
            input.ncols(),
            params.input_dim()
        )));
    }
    let mut current = input.to_owned();
    for layer in &params.layers {
        let mut z = current.dot(&layer.weights.t());
        z += &layer.bias;
        layer.activation.apply(&mut z);
        current = z;
    }
    Ok(current)
}

/// Reverse-mode pass. `upstream` is dLoss/dOutput, row-major `batch × output_dim`.
pub fn backward(params: &ModelParams, cache: &ForwardCache, upstream: &[f64]) -> Result<Gradients> {
    let batch = cache.batch_size();
    if cache.inputs.len() != params.layers.len() {
        return Err(Error::invalid("cache depth does not match model"));
    }
    if upstream.len() != batch * params.output_dim() {
        return Err(Error::invalid(format!(
            "upstream gradient has {} values, expected {}",
            upstream.len(),
            batch * params.output_dim()
        )));
    }
    for (layer, x) in params.layers.iter().zip(&cache.inputs) {
        if x.ncols() != layer.in_dim() {
            return Err(Error::invalid("cache shapes do not match model"));
        }
    }
    let mut grad_out = Array2::from_shape_vec((batch, params.output_dim()), upstream.to_vec())
        .map_err(|e| Error::invalid(e.to_string()))?;

    let n = params.layers.len();
    let mut weights = vec![Array2::zeros((0, 0)); n];
    let mut biases = vec![Array1::zeros(0); n];
    for k in (0..n).rev() {
        let layer = &params.layers[k];
        let out = if k + 1 < n { &cache.inputs[k + 1] } else { &cache.output };
        // dZ = dA * act'(A)
        if layer.activation != Activation::Identity {
            ndarray::Zip::from(&mut grad_out)
                .and(out)
                .for_each(|g, &a| *g *= layer.activation.derivative_from_output(a));
        }
        weights[k] = grad_out.t().dot(&cache.inputs[k]);
        biases[k] = grad_out.sum_axis(Axis(0));
        grad_out = grad_out.dot(&layer.weights);
    }
    Ok(Gradients {
        weights,
        biases,
        input: grad_out,
    })
}

/// Class probabilities for one input.
pub fn predict_proba(params: &ModelParams, input: &[f64]) -> Result<Vec<f64>> {
    let (logits, _) = forward(params, input)?;
    Ok(softmax(&logits))
}

/// Row-wise class probabilities for a batch.
pub fn predict_proba_batch(params: &ModelParams, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut logits = infer_batch(params, input)?;
    for mut row in logits.rows_mut() {
        let p = softmax(row.as_slice().expect("standard layout"));
        row.assign(&Array1::from(p));
    }
    Ok(logits)
}

#[cfg(test)]
mod tests;
