use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{objective, traverse_until, TraversalConfig, TraversalResult};
use crate::error::{Error, Result};
use crate::generative::{GenerativeModel, LatentPair, PseudoDr};
use crate::nn::{predict_proba, ModelParams};
use crate::stats::Group;
use crate::synthetic::{Image, ImageSample, Subgroup};

/// Which attribute the traversal changes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Referable starters pushed toward darker appearance.
    RaOptimized,
    /// Darker starters pushed toward referable DR.
    DrOptimized,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::RaOptimized, Strategy::DrOptimized];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::RaOptimized => "ra_optimized",
            Strategy::DrOptimized => "dr_optimized",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ra_optimized" => Ok(Strategy::RaOptimized),
            "dr_optimized" => Ok(Strategy::DrOptimized),
            _ => Err(Error::invalid(format!("unknown strategy `{s}`"))),
        }
    }
}

pub struct SynthesisModels<'a> {
    pub generative: &'a GenerativeModel,
    pub b_dr_dls: &'a ModelParams,
    pub ra_dls: &'a ModelParams,
    /// L-RA-DLS for `RaOptimized`, L-DR-DLS for `DrOptimized`.
    pub latent_clf: &'a ModelParams,
    pub image_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub strategy: Strategy,
    pub required: usize,
    pub accepted: usize,
    pub attempted: usize,
    pub starter_pool: usize,
    pub acceptance_rate: f64,
    pub converged: usize,
    /// Share of traversals whose loss never increased.
    pub monotone_fraction: f64,
    /// Mean |change| of the other attribute's probability, start to accepted end.
    pub mean_non_target_change: f64,
    /// Same quantity along the straight line toward the target-class latent mean.
    pub rectilinear_mean_non_target_change: f64,
    /// Accepted samples whose preserved attribute fell below 0.5 at some checked step.
    pub dipped_below_half_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct SynthesisOutcome {
    pub samples: Vec<ImageSample>,
    pub report: SynthesisReport,
    /// Traversal results of accepted starters, in acceptance order. Only the
    /// first [`KEPT_LATENT_TRACES`] keep `w_trace`.
    pub traversals: Vec<TraversalResult>,
}

/// Accepted traversals that keep their per-step latents for trace dumps.
pub const KEPT_LATENT_TRACES: usize = 3;
/// Stride between traced iterates at which the preserved attribute is re-checked.
const DIP_CHECK_STRIDE: usize = 10;
/// Stride at which the acceptance filter is re-checked once the target is reached.
const FILTER_CHECK_STRIDE: usize = 10;

struct Probe<'a> {
    models: &'a SynthesisModels<'a>,
}

impl Probe<'_> {
    fn image(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.models.generative.decode(w)
    }

    fn p_referable(&self, image: &[f64]) -> Result<f64> {
        Ok(predict_proba(self.models.b_dr_dls, image)?[1])
    }

    fn p_darker(&self, image: &[f64]) -> Result<f64> {
        Ok(predict_proba(self.models.ra_dls, image)?[1])
    }

    /// Probability of the attribute the strategy should preserve.
    fn non_target(&self, strategy: Strategy, image: &[f64]) -> Result<f64> {
        match strategy {
            Strategy::RaOptimized => self.p_referable(image),
            Strategy::DrOptimized => self.p_darker(image),
        }
    }
}

/// Acceptance filter on the decoded image: B-DR-DLS says referable and RA-DLS says darker.
/// Two-way argmax with ties toward class 0.
pub fn passes_filter(p_referable: f64, p_darker: f64) -> bool {
    p_referable > 0.5 && p_darker > 0.5
}

fn is_starter(strategy: Strategy, pair: &LatentPair) -> bool {
    match strategy {
        Strategy::RaOptimized => pair.pseudo_dr == Some(PseudoDr::Referable),
        Strategy::DrOptimized => pair.pseudo_ra == Some(Group::Darker),
    }
}

/// Mean latent of the pairs already in the target class.
fn target_mean(strategy: Strategy, pairs: &[LatentPair], dim: usize) -> Option<Vec<f64>> {
    let members: Vec<&LatentPair> = pairs
        .iter()
        .filter(|p| match strategy {
            Strategy::RaOptimized => p.pseudo_ra == Some(Group::Darker),
            Strategy::DrOptimized => p.pseudo_dr == Some(PseudoDr::Referable),
        })
        .collect();
    if members.is_empty() {
        return None;
    }
    let mut mean = vec![0.0; dim];
    for p in &members {
        for (m, v) in mean.iter_mut().zip(&p.w) {
            *m += v;
        }
    }
    let n = members.len() as f64;
    Some(mean.into_iter().map(|m| m / n).collect())
}

/// Point on `w0 + a (mu - w0)` whose target probability first reaches `goal`, for `a` in `[0, 4]`.
fn rectilinear_match(clf: &ModelParams, w0: &[f64], mu: &[f64], goal: f64, class: usize) -> Result<Vec<f64>> {
    let at = |a: f64| -> Vec<f64> { w0.iter().zip(mu).map(|(x, m)| x + a * (m - x)).collect() };
    let prob = |a: f64| -> Result<f64> { Ok(objective(clf, &at(a), class)?.0) };
    const A_MAX: f64 = 4.0;
    const SCAN: usize = 40;
    let mut lo = 0.0;
    let mut hi = None;
    for i in 1..=SCAN {
        let a = A_MAX * i as f64 / SCAN as f64;
        if prob(a)? >= goal {
            hi = Some(a);
            break;
        }
        lo = a;
    }
    let Some(mut hi) = hi else {
        return Ok(at(A_MAX));
    };
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if prob(mid)? >= goal {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(at(hi))
}

/// Traverses starters in pool order until `count` outputs pass the acceptance filter.
///
/// A sample is accepted when B-DR-DLS calls its decoded image referable and
/// RA-DLS calls it darker, whether or not the traversal converged. Once the
/// target probability is reached a traversal keeps stepping until the filter
/// passes or `max_steps` runs out.
pub fn synthesize_rd(
    strategy: Strategy,
    pairs: &[LatentPair],
    models: &SynthesisModels<'_>,
    count: usize,
    config: &TraversalConfig,
    id_prefix: &str,
) -> Result<SynthesisOutcome> {
    config.validate()?;
    let dim = models.generative.latent_dim();
    if models.latent_clf.input_dim() != dim {
        return Err(Error::invalid(
            "latent classifier does not match the generative latent size",
        ));
    }
    if models.image_size * models.image_size != models.generative.image_dim() {
        return Err(Error::invalid("image_size does not match the generative image size"));
    }
    if pairs.iter().any(|p| p.pseudo_dr.is_none() || p.pseudo_ra.is_none()) {
        return Err(Error::invalid("synthesis needs pseudo-labelled pairs"));
    }
    let starters: Vec<&LatentPair> = pairs.iter().filter(|p| is_starter(strategy, p)).collect();
    let probe = Probe { models };
    let mu = target_mean(strategy, pairs, dim);

    let mut samples = Vec::with_capacity(count);
    let mut traversals = Vec::with_capacity(count);
    let (mut attempted, mut converged, mut monotone) = (0usize, 0usize, 0usize);
    let (mut change_sum, mut rect_sum, mut dipped) = (0.0, 0.0, 0usize);
    let trace_config = TraversalConfig {
        record_trace: true,
        ..config.clone()
    };
    for starter in &starters {
        if samples.len() == count {
            break;
        }
        attempted += 1;
        let mut calls = 0usize;
        let result = traverse_until(&starter.w, models.latent_clf, &trace_config, |w| {
            // Above the target the filter is re-checked every few steps only.
            calls += 1;
            if !(calls - 1).is_multiple_of(FILTER_CHECK_STRIDE) {
                return Ok(false);
            }
            let image = probe.image(w)?;
            Ok(passes_filter(probe.p_referable(&image)?, probe.p_darker(&image)?))
        })?;
        if result.converged {
            converged += 1;
        }
        let increases = result.loss_increases();
        if increases == 0 {
            monotone += 1;
        } else {
            log::warn!(
                "{}: loss increased on {increases} of {} steps for a starter",
                strategy.name(),
                result.steps_taken
            );
        }
        let image = probe.image(&result.w_final)?;
        let p_ref = probe.p_referable(&image)?;
        let p_dark = probe.p_darker(&image)?;
        if !passes_filter(p_ref, p_dark) {
            continue;
        }
        let start_image = probe.image(&starter.w)?;
        let start_nt = probe.non_target(strategy, &start_image)?;
        let end_nt = probe.non_target(strategy, &image)?;
        change_sum += (end_nt - start_nt).abs();

        let mut dip = false;
        for w in result.w_trace.iter().step_by(DIP_CHECK_STRIDE) {
            if probe.non_target(strategy, &probe.image(w)?)? < 0.5 {
                dip = true;
                break;
            }
        }
        if dip {
            dipped += 1;
        }

        if let Some(mu) = &mu {
            let w_rect = rectilinear_match(
                models.latent_clf,
                &starter.w,
                mu,
                result.final_prob,
                config.target_class,
            )?;
            let rect_nt = probe.non_target(strategy, &probe.image(&w_rect)?)?;
            rect_sum += (rect_nt - start_nt).abs();
        }

        let pixels = Image::new(models.image_size, models.image_size, image)?;
        samples.push(ImageSample::synthetic(
            format!("{id_prefix}-{:05}", samples.len()),
            pixels,
            Subgroup::RD,
        ));
        let mut kept = result;
        // Keep memory bounded: past the first few, per-step latents were only needed for the checks above.
        if traversals.len() >= KEPT_LATENT_TRACES {
            kept.w_trace.clear();
        }
        traversals.push(kept);
    }

    let accepted = samples.len();
    let rate = if attempted == 0 {
        0.0
    } else {
        accepted as f64 / attempted as f64
    };
    if accepted < count {
        return Err(Error::InsufficientStarters {
            accepted,
            required: count,
            attempted,
            acceptance_rate: rate,
        });
    }
    let per = |x: f64| if accepted == 0 { 0.0 } else { x / accepted as f64 };
    let report = SynthesisReport {
        strategy,
        required: count,
        accepted,
        attempted,
        starter_pool: starters.len(),
        acceptance_rate: rate,
        converged,
        monotone_fraction: if attempted == 0 {
            1.0
        } else {
            monotone as f64 / attempted as f64
        },
        mean_non_target_change: per(change_sum),
        rectilinear_mean_non_target_change: if mu.is_some() { per(rect_sum) } else { f64::NAN },
        dipped_below_half_fraction: per(dipped as f64),
    };
    Ok(SynthesisOutcome {
        samples,
        report,
        traversals,
    })
}

/// Writes `step,loss,target_prob,non_target_prob` for one traced traversal.
pub fn write_trace_csv(
    path: &Path,
    strategy: Strategy,
    result: &TraversalResult,
    models: &SynthesisModels<'_>,
) -> Result<()> {
    if result.w_trace.is_empty() || result.w_trace.len() != result.loss_trace.len() {
        return Err(Error::invalid("traversal was not traced"));
    }
    let probe = Probe { models };
    let mut out = Vec::new();
    writeln!(out, "step,loss,target_prob,non_target_prob").expect("vec write");
    for (k, w) in result.w_trace.iter().enumerate() {
        let nt = probe.non_target(strategy, &probe.image(w)?)?;
        writeln!(
            out,
            "{k},{:.9},{:.9},{:.9}",
            result.loss_trace[k], result.prob_trace[k], nt
        )
        .expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
