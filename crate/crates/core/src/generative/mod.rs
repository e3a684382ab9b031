//! Autoencoder with a diagonal-Gaussian latent prior, used to produce `(w, image)` pairs.

mod checkpoint;
mod pca;

pub use checkpoint::GENERATIVE_MAGIC;
pub use pca::{embed_pca, principal_components};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    argmax, backward, forward_batch, infer_batch, predict_proba_batch, sgd_step, Activation, Architecture, Layer,
    ModelParams, TrainConfig,
};
use crate::stats::Group;

/// Smallest prior variance kept after fitting, so the prior stays proper.
pub const MIN_PRIOR_VARIANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    /// Start from the principal-component autoencoder instead of random weights.
    pub pca_init: bool,
    /// Prior standard deviation of every latent coordinate after training.
    pub latent_scale: f64,
    pub train: TrainConfig,
}

impl Default for GenerativeConfig {
    fn default() -> Self {
        GenerativeConfig {
            latent_dim: 32,
            hidden_dim: 256,
            pca_init: true,
            latent_scale: 0.3,
            train: TrainConfig {
                learning_rate: 0.003,
                epochs: 30,
                batch_size: 16,
                seed: 0,
                weight_init_scale: 1.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeModel {
    encoder: ModelParams,
    decoder: ModelParams,
    prior_mean: Vec<f64>,
    prior_var: Vec<f64>,
}

impl GenerativeModel {
    pub fn new(encoder: ModelParams, decoder: ModelParams, prior_mean: Vec<f64>, prior_var: Vec<f64>) -> Result<Self> {
        let latent = encoder.output_dim();
        if decoder.input_dim() != latent || decoder.output_dim() != encoder.input_dim() {
            return Err(Error::invalid(format!(
                "encoder {}->{} does not pair with decoder {}->{}",
                encoder.input_dim(),
                latent,
                decoder.input_dim(),
                decoder.output_dim()
            )));
        }
        if prior_mean.len() != latent || prior_var.len() != latent {
            return Err(Error::invalid("prior length differs from latent_dim"));
        }
        if prior_mean.iter().any(|m| !m.is_finite()) || prior_var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("prior must be finite with positive variances"));
        }
        Ok(GenerativeModel {
            encoder,
            decoder,
            prior_mean,
            prior_var,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn image_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn encoder(&self) -> &ModelParams {
        &self.encoder
    }

    pub fn decoder(&self) -> &ModelParams {
        &self.decoder
    }

    pub fn prior_mean(&self) -> &[f64] {
        &self.prior_mean
    }

    pub fn prior_var(&self) -> &[f64] {
        &self.prior_var
    }

    pub fn encode(&self, image: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encode_batch(row(image)?)?.row(0).to_vec())
    }

    pub fn encode_batch(&self, images: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        infer_batch(&self.encoder, images)
    }

    /// Decodes one latent vector. This is the reference path for every `(w, image)` pair.
    pub fn decode(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.latent_dim() {
            return Err(Error::invalid(format!(
                "latent has {} values, model expects {}",
                w.len(),
                self.latent_dim()
            )));
        }
        Ok(infer_batch(&self.decoder, row(w)?)?.row(0).to_vec())
    }

    pub fn decode_batch(&self, ws: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        infer_batch(&self.decoder, ws)
    }

    /// Mean squared reconstruction error per pixel.
    pub fn reconstruction_mse(&self, images: ArrayView2<'_, f64>) -> Result<f64> {
        let rec = self.decode_batch(self.encode_batch(images)?.view())?;
        Ok((&rec - &images).mapv(|d| d * d).mean().unwrap_or(0.0))
    }
}

fn row(values: &[f64]) -> Result<ArrayView2<'_, f64>> {
    ArrayView2::from_shape((1, values.len()), values).map_err(|e| Error::invalid(e.to_string()))
}

/// Trains encoder and decoder jointly on squared reconstruction error, then fits the prior.
///
/// The per-sample loss is half the summed squared error over pixels; that is
/// the per-pixel mean scaled by a constant absorbed into the learning rate.
pub fn train_generative(images: ArrayView2<'_, f64>, config: &GenerativeConfig) -> Result<GenerativeModel> {
    config.train.validate()?;
    if config.latent_dim == 0 || config.hidden_dim == 0 {
        return Err(Error::invalid("latent_dim and hidden_dim must be positive"));
    }
    if !(config.latent_scale.is_finite() && config.latent_scale > 0.0) {
        return Err(Error::invalid("latent_scale must be positive"));
    }
    if images.nrows() == 0 {
        return Err(Error::invalid("cannot train the generative model on an empty dataset"));
    }
    let dim = images.ncols();
    let arch = Architecture {
        input_dim: dim,
        layers: vec![
            (config.hidden_dim, Activation::Relu),
            (config.latent_dim, Activation::Identity),
            (config.hidden_dim, Activation::Relu),
            (dim, Activation::Sigmoid),
        ],
    };
    let tc = &config.train;
    let mut net = ModelParams::init_uniform(&arch, tc.weight_init_scale, &mut tc.init_rng())?;
    // Start the decoder at the mean image so training only has to learn the residual.
    let mean = images.mean_axis(Axis(0)).expect("non-empty");
    if config.pca_init {
        let (mean, comps) = principal_components(images, config.latent_dim.min(dim))?;
        embed_pca(&mut net, &mean, &comps)?;
    } else if let Some(out) = net.layers_mut().last_mut() {
        out.bias = mean.mapv(|m| {
            let m = m.clamp(1e-3, 1.0 - 1e-3);
            (m / (1.0 - m)).ln()
        });
    }
    let mut order: Vec<usize> = (0..images.nrows()).collect();
    let mut rng = tc.shuffle_rng();
    if tc.learning_rate > 0.0 {
        for epoch in 0..tc.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(tc.batch_size) {
                let batch = images.select(Axis(0), chunk);
                let cache = forward_batch(&net, batch.view())?;
                let upstream = cache.output() - &batch;
                let upstream = upstream.as_standard_layout();
                let grads = backward(&net, &cache, upstream.as_slice().expect("standard layout"))?;
                if !grads.is_finite() {
                    return Err(Error::numeric(Some(epoch), "generative training diverged"));
                }
                sgd_step(&mut net, &grads, tc.learning_rate / chunk.len() as f64);
            }
            log::debug!("generative epoch {epoch}");
        }
    }
    let mut layers: Vec<Layer> = net.layers().to_vec();
    let codes = infer_batch(&ModelParams::new(layers[..2].to_vec())?, images)?;
    let (mean, var) = fit_prior(&codes);
    standardize_latent(&mut layers, &mean, &var, config.latent_scale);
    let encoder = ModelParams::new(layers[..2].to_vec())?;
    let decoder = ModelParams::new(layers[2..].to_vec())?;
    let codes = infer_batch(&encoder, images)?;
    let (prior_mean, prior_var) = fit_prior(&codes);
    GenerativeModel::new(encoder, decoder, prior_mean, prior_var)
}

/// Rescales the code layer to `scale * (z - mean) / sd` and folds the inverse map into
/// the first decoder layer, so `decode(encode(x))` is unchanged.
fn standardize_latent(layers: &mut [Layer], mean: &[f64], var: &[f64], scale: f64) {
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt() / scale).collect();
    let code = &mut layers[1];
    for (k, mut row) in code.weights.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|w| w / sd[k]);
        code.bias[k] = (code.bias[k] - mean[k]) / sd[k];
    }
    let first = &mut layers[2];
    let shift = first.weights.dot(&ndarray::ArrayView1::from(mean));
    first.bias += &shift;
    for (k, mut col) in first.weights.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|w| w * sd[k]);
    }
}

/// Per-coordinate mean and (population) variance of the encodings.
pub fn fit_prior(codes: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = codes.nrows().max(1) as f64;
    let mean = codes.sum_axis(Axis(0)) / n;
    let var = codes
        .rows()
        .into_iter()
        .fold(ndarray::Array1::<f64>::zeros(codes.ncols()), |acc, r| {
            acc + (&r - &mean).mapv(|d| d * d)
        })
        / n;
    (mean.to_vec(), var.iter().map(|v| v.max(MIN_PRIOR_VARIANCE)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PseudoDr {
    Healthy,
    Referable,
}

impl PseudoDr {
    pub fn from_class(class: usize) -> Self {
        if class == 1 {
            PseudoDr::Referable
        } else {
            PseudoDr::Healthy
        }
    }
}

/// A latent vector and its decoded image, with classifier pseudo-labels once assigned.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPair {
    pub w: Vec<f64>,
    pub image: Vec<f64>,
    pub pseudo_dr: Option<PseudoDr>,
    pub pseudo_ra: Option<Group>,
    pub p_referable: Option<f64>,
    pub p_darker: Option<f64>,
}

impl LatentPair {
    pub fn new(w: Vec<f64>, image: Vec<f64>) -> Self {
        LatentPair {
            w,
            image,
            pseudo_dr: None,
            pseudo_ra: None,
            p_referable: None,
            p_darker: None,
        }
    }
}

/// Draws `n` latents from the prior and decodes each one.
pub fn sample_pairs(model: &GenerativeModel, n: usize, seed: u64) -> Result<Vec<LatentPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd: Vec<f64> = model.prior_var.iter().map(|v| v.sqrt()).collect();
    (0..n)
        .map(|_| {
            let w: Vec<f64> = model
                .prior_mean
                .iter()
                .zip(&sd)
                .map(|(m, s)| m + s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            let image = model.decode(&w)?;
            Ok(LatentPair::new(w, image))
        })
        .collect()
}

/// Assigns DR pseudo-labels from `b_dr_dls` and appearance pseudo-labels from `ra_dls`.
///
/// Class 1 is referable for the DR classifier and darker for the appearance classifier.
pub fn pseudo_label_pairs(pairs: &mut [LatentPair], b_dr_dls: &ModelParams, ra_dls: &ModelParams) -> Result<()> {
    let Some(first) = pairs.first() else {
        return Ok(());
    };
    let dim = first.image.len();
    for (name, m) in [("B-DR-DLS", b_dr_dls), ("RA-DLS", ra_dls)] {
        if m.input_dim() != dim || m.output_dim() != 2 {
            return Err(Error::invalid(format!(
                "{name} expects {}->{}, pair images have {dim} pixels",
                m.input_dim(),
                m.output_dim()
            )));
        }
    }
    if pairs.iter().any(|p| p.image.len() != dim) {
        return Err(Error::invalid("pair images differ in size"));
    }
    for chunk in pairs.chunks_mut(512) {
        let flat: Vec<f64> = chunk.iter().flat_map(|p| p.image.iter().copied()).collect();
        let x = ArrayView2::from_shape((chunk.len(), dim), &flat).map_err(|e| Error::invalid(e.to_string()))?;
        let dr = predict_proba_batch(b_dr_dls, x)?;
        let ra = predict_proba_batch(ra_dls, x)?;
        for (i, p) in chunk.iter_mut().enumerate() {
            let dr_row = [dr[[i, 0]], dr[[i, 1]]];
            let ra_row = [ra[[i, 0]], ra[[i, 1]]];
            p.pseudo_dr = Some(PseudoDr::from_class(argmax(&dr_row)));
            p.pseudo_ra = Some(if argmax(&ra_row) == 1 {
                Group::Darker
            } else {
                Group::Lighter
            });
            p.p_referable = Some(dr_row[1]);
            p.p_darker = Some(ra_row[1]);
        }
    }
    Ok(())
}
