use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, forward_batch, softmax_xent, Architecture, Gradients, ModelParams};
use crate::error::{Error, Result};

/// Rows of `inputs` paired with integer class targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Vec<usize>) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::invalid(format!(
                "{} input rows but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn from_pairs(pairs: &[(Vec<f64>, usize)]) -> Result<Self> {
        let dim = pairs.first().map(|p| p.0.len()).unwrap_or(0);
        if pairs.iter().any(|p| p.0.len() != dim) {
            return Err(Error::invalid("inconsistent input dimensions in dataset"));
        }
        let flat: Vec<f64> = pairs.iter().flat_map(|p| p.0.iter().copied()).collect();
        let inputs = Array2::from_shape_vec((pairs.len(), dim), flat).map_err(|e| Error::invalid(e.to_string()))?;
        Dataset::new(inputs, pairs.iter().map(|p| p.1).collect())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.targets.iter().filter(|&&t| t == class).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            weight_init_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // learning_rate = 0 is allowed so callers can check that training is a no-op.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate must be a finite non-negative number"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.weight_init_scale.is_finite() && self.weight_init_scale > 0.0) {
            return Err(Error::invalid("weight_init_scale must be positive"));
        }
        Ok(())
    }

    /// Separate streams for initialization and shuffling, both fixed by `seed`.
    pub(crate) fn init_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ 0x5EED_1A17_0000_0001)
    }

    pub(crate) fn shuffle_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ 0x5EED_5B0F_0000_0002)
    }
}

/// In-place `params -= scale * grads`.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, scale: f64) {
    for ((layer, gw), gb) in params.layers_mut().iter_mut().zip(&grads.weights).zip(&grads.biases) {
        layer.weights.scaled_add(-scale, gw);
        layer.bias.scaled_add(-scale, gb);
    }
}

/// Mini-batch SGD on softmax cross-entropy from a seeded uniform initialization.
pub fn train_classifier(dataset: &Dataset, config: &TrainConfig, arch: &Architecture) -> Result<ModelParams> {
    config.validate()?;
    if arch.input_dim != dataset.input_dim() {
        return Err(Error::invalid(format!(
            "architecture input dim {} != dataset dim {}",
            arch.input_dim,
            dataset.input_dim()
        )));
    }
    let init = ModelParams::init_uniform(arch, config.weight_init_scale, &mut config.init_rng())?;
    train_classifier_from(init, dataset, config)
}

/// Same as [`train_classifier`] but starting from caller-provided parameters.
pub fn train_classifier_from(mut params: ModelParams, dataset: &Dataset, config: &TrainConfig) -> Result<ModelParams> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if dataset.input_dim() != params.input_dim() {
        return Err(Error::invalid(format!(
            "dataset dim {} != model input dim {}",
            dataset.input_dim(),
            params.input_dim()
        )));
    }
    let classes = params.output_dim();
    if let Some(&bad) = dataset.targets.iter().find(|&&t| t >= classes) {
        return Err(Error::invalid(format!(
            "target class {bad} out of range for {classes} outputs"
        )));
    }
    if config.learning_rate == 0.0 {
        return Ok(params);
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = config.shuffle_rng();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = dataset.inputs.select(Axis(0), chunk);
            let cache = forward_batch(&params, batch.view())?;
            let mut upstream = Vec::with_capacity(chunk.len() * classes);
            for (row, &idx) in cache.output().rows().into_iter().zip(chunk) {
                let (_, g) =
                    softmax_xent(row.as_slice().expect("contiguous"), dataset.targets[idx]).map_err(|e| match e {
                        Error::Numeric { message, .. } => {
                            Error::numeric(Some(epoch), format!("diverged during training: {message}"))
                        }
                        other => other,
                    })?;
                upstream.extend(g);
            }
            let grads = backward(&params, &cache, &upstream)?;
            sgd_step(&mut params, &grads, config.learning_rate / chunk.len() as f64);
        }
    }
    Ok(params)
}
