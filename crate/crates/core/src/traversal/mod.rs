//! Gradient descent in latent space toward a target attribute, and RD synthesis on top of it.

mod synthesize;

pub use synthesize::{
    passes_filter, synthesize_rd, write_trace_csv, Strategy, SynthesisModels, SynthesisOutcome, SynthesisReport,
    KEPT_LATENT_TRACES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generative::{LatentPair, PseudoDr};
use crate::nn::{
    backward, forward, softmax, train_classifier, Activation, Architecture, Dataset, ModelParams, TrainConfig,
};
use crate::stats::Group;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraversalConfig {
    pub eta: f64,
    pub max_steps: usize,
    pub target_prob: f64,
    pub target_class: usize,
    pub record_trace: bool,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        TraversalConfig {
            eta: 0.01,
            max_steps: 500,
            target_prob: 0.9,
            target_class: 1,
            record_trace: true,
        }
    }
}

impl TraversalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::invalid("eta must be finite and non-negative"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        if !(self.target_prob > 0.0 && self.target_prob <= 1.0) {
            return Err(Error::invalid("target_prob must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraversalResult {
    pub w_final: Vec<f64>,
    pub steps_taken: usize,
    /// `(y - 1)^2` at every iterate, including the start. Empty unless tracing.
    pub loss_trace: Vec<f64>,
    /// Target-class probability at every iterate. Empty unless tracing.
    pub prob_trace: Vec<f64>,
    /// Every iterate, including `w0`. Empty unless tracing.
    pub w_trace: Vec<Vec<f64>>,
    pub final_prob: f64,
    pub converged: bool,
}

impl TraversalResult {
    /// Count of steps where the loss went up.
    pub fn loss_increases(&self) -> usize {
        self.loss_trace.windows(2).filter(|p| p[1] > p[0]).count()
    }
}

/// Target-class probability `y(w)`, the loss `(y - 1)^2` and its gradient with respect to `w`.
pub fn objective(clf: &ModelParams, w: &[f64], target_class: usize) -> Result<(f64, f64, Vec<f64>)> {
    if target_class >= clf.output_dim() {
        return Err(Error::invalid(format!(
            "target class {target_class} out of range for {} outputs",
            clf.output_dim()
        )));
    }
    let (logits, cache) = forward(clf, w)?;
    let p = softmax(&logits);
    let y = p[target_class];
    let loss = (y - 1.0) * (y - 1.0);
    // dJ/dz_k = 2 (y - 1) * y * (1[k = t] - p_k)
    let outer = 2.0 * (y - 1.0) * y;
    let upstream: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(k, &pk)| outer * (f64::from(u8::from(k == target_class)) - pk))
        .collect();
    let grads = backward(clf, &cache, &upstream)?;
    Ok((y, loss, grads.input.row(0).to_vec()))
}

/// Iterates `w <- w - eta * grad (y(w) - 1)^2` until `y >= target_prob` or `max_steps` updates.
pub fn traverse(w0: &[f64], latent_clf: &ModelParams, config: &TraversalConfig) -> Result<TraversalResult> {
    traverse_until(w0, latent_clf, config, |_| Ok(true))
}

/// Like [`traverse`], but an iterate with `y >= target_prob` only ends the run when
/// `accept` also returns true for it. `accept` is not called below the target.
pub fn traverse_until(
    w0: &[f64],
    latent_clf: &ModelParams,
    config: &TraversalConfig,
    mut accept: impl FnMut(&[f64]) -> Result<bool>,
) -> Result<TraversalResult> {
    config.validate()?;
    if w0.len() != latent_clf.input_dim() {
        return Err(Error::invalid(format!(
            "latent has {} values, classifier expects {}",
            w0.len(),
            latent_clf.input_dim()
        )));
    }
    if w0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("starting latent is not finite"));
    }
    let mut w = w0.to_vec();
    let mut loss_trace = Vec::new();
    let mut prob_trace = Vec::new();
    let mut w_trace = Vec::new();
    let mut step = 0;
    loop {
        let (y, loss, grad) = objective(latent_clf, &w, config.target_class)?;
        if config.record_trace {
            loss_trace.push(loss);
            prob_trace.push(y);
            w_trace.push(w.clone());
        }
        let converged = y >= config.target_prob;
        if (converged && accept(&w)?) || step == config.max_steps {
            return Ok(TraversalResult {
                w_final: w,
                steps_taken: step,
                loss_trace,
                prob_trace,
                w_trace,
                final_prob: y,
                converged,
            });
        }
        if grad.iter().any(|g| !g.is_finite()) || !y.is_finite() {
            return Err(Error::numeric(Some(step), "non-finite latent gradient"));
        }
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= config.eta * gi;
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(Some(step), "latent iterate overflowed"));
        }
        step += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentTarget {
    /// Appearance classifier trained on healthy pairs (class 1 = darker).
    Ra,
    /// DR classifier trained on darker pairs (class 1 = referable).
    Dr,
    /// DR classifier trained on every pair, for when the darker pairs hold a single class.
    #[serde(rename = "dr-all")]
    DrAll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentClassifierConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for LatentClassifierConfig {
    fn default() -> Self {
        LatentClassifierConfig {
            hidden: vec![64],
            train: TrainConfig {
                learning_rate: 0.05,
                epochs: 10,
                batch_size: 32,
                seed: 0,
                weight_init_scale: 1.0,
            },
        }
    }
}

/// Latent vectors and targets for one latent classifier, after the subset rule.
pub fn latent_training_set(pairs: &[LatentPair], target: LatentTarget) -> Result<Dataset> {
    let mut rows = Vec::new();
    for p in pairs {
        let (dr, ra) = match (p.pseudo_dr, p.pseudo_ra) {
            (Some(dr), Some(ra)) => (dr, ra),
            _ => return Err(Error::invalid("latent classifier needs pseudo-labelled pairs")),
        };
        match target {
            LatentTarget::Ra if dr == PseudoDr::Healthy => rows.push((p.w.clone(), usize::from(ra == Group::Darker))),
            LatentTarget::Dr if ra == Group::Darker => rows.push((p.w.clone(), usize::from(dr == PseudoDr::Referable))),
            LatentTarget::DrAll => rows.push((p.w.clone(), usize::from(dr == PseudoDr::Referable))),
            _ => {}
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!(
            "no pairs qualify for the {target:?} latent classifier"
        )));
    }
    let ones = rows.iter().filter(|r| r.1 == 1).count();
    if ones == 0 || ones == rows.len() {
        return Err(Error::invalid(format!(
            "degenerate {target:?} latent training set: {ones} of {} in class 1",
            rows.len()
        )));
    }
    Dataset::from_pairs(&rows)
}

pub fn train_latent_classifier(
    pairs: &[LatentPair],
    target: LatentTarget,
    config: &LatentClassifierConfig,
) -> Result<ModelParams> {
    let data = latent_training_set(pairs, target)?;
    let arch = Architecture::mlp(data.input_dim(), &config.hidden, 2, Activation::Identity);
    train_classifier(&data, &config.train, &arch)
}

#[cfg(test)]
mod tests;
