use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    build_partitions, derive_seed, extrapolate_ra_labels, image_dataset, image_matrix, select_manual,
    ExtrapolationOutcome, Partitions, PipelineConfig,
};
use crate::error::{Error, Result};
use crate::generative::{pseudo_label_pairs, sample_pairs, train_generative, GenerativeModel, LatentPair, PseudoDr};
use crate::nn::{predict_proba_batch, train_classifier, Activation, Architecture, ModelParams};
use crate::stats::{fairness_report, sensitivity_all_positive, FairnessReport, Group, Metric, PredictionRecord};
use crate::synthetic::{ImageSample, RaLabel};
use crate::traversal::{
    synthesize_rd, train_latent_classifier, LatentTarget, Strategy, SynthesisModels, SynthesisReport, TraversalConfig,
    TraversalResult,
};

pub const BASELINE_SYSTEM: &str = "Baseline";

pub fn system_name(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::RaOptimized => "Debiased (retinal appearance)",
        Strategy::DrOptimized => "Debiased (DR status)",
    }
}

#[derive(Clone, Debug)]
pub struct BaselineOutcome {
    pub model: ModelParams,
    pub report: FairnessReport,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct GeneratorOutcome {
    pub generative: GenerativeModel,
    pub ra_dls: ModelParams,
    pub pairs: Vec<LatentPair>,
    pub l_ra_dls: ModelParams,
    pub l_dr_dls: ModelParams,
    /// Pair subset L-DR-DLS was trained on: `Dr` normally, `DrAll` when the darker pairs were one-class.
    pub l_dr_target: LatentTarget,
}

impl GeneratorOutcome {
    pub fn latent_classifier(&self, strategy: Strategy) -> &ModelParams {
        match strategy {
            Strategy::RaOptimized => &self.l_ra_dls,
            Strategy::DrOptimized => &self.l_dr_dls,
        }
    }

    /// Pairs per `(pseudo_dr, pseudo_ra)` cell: healthy-lighter, referable-lighter, healthy-darker, referable-darker.
    pub fn pair_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for p in &self.pairs {
            let referable = p.pseudo_dr == Some(PseudoDr::Referable);
            let darker = p.pseudo_ra == Some(Group::Darker);
            c[usize::from(referable) + 2 * usize::from(darker)] += 1;
        }
        c
    }
}

#[derive(Clone, Debug)]
pub struct DebiasOutcome {
    pub strategy: Strategy,
    pub model: ModelParams,
    pub report: FairnessReport,
    pub synthesis: SynthesisReport,
    pub synthetic: Vec<ImageSample>,
    /// Traversals of the accepted starters, in acceptance order.
    pub traversals: Vec<TraversalResult>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub partitions: Partitions,
    pub extrapolation: ExtrapolationOutcome,
    pub baseline: BaselineOutcome,
    pub generator: GeneratorOutcome,
    pub debiased: Vec<DebiasOutcome>,
}

fn referable_target(s: &ImageSample) -> usize {
    usize::from(s.referable)
}

fn dls_arch(input_dim: usize, hidden: &[usize]) -> Architecture {
    Architecture::mlp(input_dim, hidden, 2, Activation::Identity)
}

/// Referable probability of every sample.
fn scores(model: &ModelParams, samples: &[&ImageSample]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let probs = predict_proba_batch(model, image_matrix(samples)?.view())?;
    Ok(probs.column(1).to_vec())
}

/// Scored prediction records of `model` on `samples`, in sample order.
pub fn predict_records(model: &ModelParams, samples: &[ImageSample], threshold: f64) -> Result<Vec<PredictionRecord>> {
    let refs: Vec<&ImageSample> = samples.iter().collect();
    let s = scores(model, &refs)?;
    Ok(samples
        .iter()
        .zip(s)
        .map(|(x, score)| PredictionRecord::with_threshold(score, x.referable, x.group(), threshold))
        .collect())
}

/// Fairness report of `model` on `test`, split by appearance label.
pub fn evaluate(model: &ModelParams, test: &[ImageSample], system: &str, threshold: f64) -> Result<FairnessReport> {
    fairness_report(system, &predict_records(model, test, threshold)?, threshold)
}

/// Sensitivity on the all-referable, all-darker pool.
pub fn evaluate_leftover(model: &ModelParams, leftover: &[ImageSample], threshold: f64) -> Result<Metric> {
    if leftover.is_empty() {
        return Err(Error::invalid("leftover pool is empty"));
    }
    if leftover.iter().any(|s| !s.referable || s.ra_label != RaLabel::Darker) {
        return Err(Error::invalid("leftover pool must be all referable and darker"));
    }
    let refs: Vec<&ImageSample> = leftover.iter().collect();
    let predicted: Vec<bool> = scores(model, &refs)?.into_iter().map(|p| p >= threshold).collect();
    sensitivity_all_positive(&predicted)
}

fn accuracy(model: &ModelParams, samples: &[&ImageSample], threshold: f64) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let s = scores(model, samples)?;
    let hits = samples
        .iter()
        .zip(s)
        .filter(|(x, p)| (*p >= threshold) == x.referable)
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Trains B-DR-DLS on the baseline fit pool and evaluates it.
pub fn run_baseline(partitions: &Partitions, config: &PipelineConfig) -> Result<BaselineOutcome> {
    let fit = partitions.fit();
    let data = image_dataset(&fit, referable_target)?;
    let arch = dls_arch(data.input_dim(), &config.b_dr_dls.hidden);
    let model = train_classifier(&data, &config.b_dr_dls.seeded(config.master_seed, "b-dr-dls"), &arch)?;
    let mut report = evaluate(&model, &partitions.test, BASELINE_SYSTEM, config.threshold)?;
    report.leftover_sensitivity = Some(evaluate_leftover(&model, &partitions.leftover_rd, config.threshold)?);
    let val_accuracy = accuracy(&model, &partitions.val(), config.threshold)?;
    Ok(BaselineOutcome {
        model,
        report,
        val_accuracy,
    })
}

/// RA-DLS on the fit pool, with the larger appearance group subsampled to the smaller one.
fn train_ra_dls(partitions: &Partitions, config: &PipelineConfig) -> Result<ModelParams> {
    let fit = partitions.fit();
    let mut lighter: Vec<&ImageSample> = fit.iter().copied().filter(|s| s.ra_label == RaLabel::Lighter).collect();
    let mut darker: Vec<&ImageSample> = fit.iter().copied().filter(|s| s.ra_label == RaLabel::Darker).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, "ra-dls-balance"));
    lighter.shuffle(&mut rng);
    darker.shuffle(&mut rng);
    let n = lighter.len().min(darker.len());
    if n == 0 {
        return Err(Error::invalid("RA-DLS needs both appearance groups in the fit pool"));
    }
    let mut pool: Vec<&ImageSample> = lighter[..n].iter().chain(&darker[..n]).copied().collect();
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    let data = image_dataset(&pool, |s| usize::from(s.ra_label == RaLabel::Darker))?;
    let arch = dls_arch(data.input_dim(), &config.ra_dls.hidden);
    train_classifier(&data, &config.ra_dls.seeded(config.master_seed, "ra-dls"), &arch)
}

/// The run's pseudo-labelled latent/image pairs. A pure function of its inputs,
/// so reloaded models give back the same pairs.
pub fn draw_pairs(
    generative: &GenerativeModel,
    b_dr_dls: &ModelParams,
    ra_dls: &ModelParams,
    config: &PipelineConfig,
) -> Result<Vec<LatentPair>> {
    let mut pairs = sample_pairs(generative, config.pair_count, derive_seed(config.master_seed, "pairs"))?;
    pseudo_label_pairs(&mut pairs, b_dr_dls, ra_dls)?;
    Ok(pairs)
}

/// Trains the generative model, RA-DLS and both latent classifiers, and draws the pseudo-labelled pairs.
pub fn train_generator_stage(
    partitions: &Partitions,
    b_dr_dls: &ModelParams,
    config: &PipelineConfig,
) -> Result<GeneratorOutcome> {
    let fit = partitions.fit();
    let images = image_matrix(&fit)?;
    let mut gen_cfg = config.generative.clone();
    gen_cfg.train.seed ^= derive_seed(config.master_seed, "generative");
    let generative = train_generative(images.view(), &gen_cfg)?;
    let ra_dls = train_ra_dls(partitions, config)?;
    let pairs = draw_pairs(&generative, b_dr_dls, &ra_dls, config)?;
    let mut latent = config.l_ra_dls.clone();
    latent.train.seed ^= derive_seed(config.master_seed, "l-ra-dls");
    let l_ra_dls = train_latent_classifier(&pairs, LatentTarget::Ra, &latent)?;
    let mut latent = config.l_dr_dls.clone();
    latent.train.seed ^= derive_seed(config.master_seed, "l-dr-dls");
    let (l_dr_dls, l_dr_target) = match train_latent_classifier(&pairs, LatentTarget::Dr, &latent) {
        Ok(m) => (m, LatentTarget::Dr),
        Err(Error::InvalidArgument(msg)) => {
            log::warn!("{msg}; training L-DR-DLS on all pairs");
            (
                train_latent_classifier(&pairs, LatentTarget::DrAll, &latent)?,
                LatentTarget::DrAll,
            )
        }
        Err(e) => return Err(e),
    };
    Ok(GeneratorOutcome {
        generative,
        ra_dls,
        pairs,
        l_ra_dls,
        l_dr_dls,
        l_dr_target,
    })
}

/// Synthesizes RD samples with `strategy`, retrains from scratch on the debiased pool and evaluates.
pub fn run_debias(
    strategy: Strategy,
    partitions: &Partitions,
    b_dr_dls: &ModelParams,
    generator: &GeneratorOutcome,
    config: &PipelineConfig,
) -> Result<DebiasOutcome> {
    let count = config.partition_spec().synthetic_rd_count();
    let models = SynthesisModels {
        generative: &generator.generative,
        b_dr_dls,
        ra_dls: &generator.ra_dls,
        latent_clf: generator.latent_classifier(strategy),
        image_size: config.generator.image_size,
    };
    let traversal = TraversalConfig {
        record_trace: true,
        ..config.traversal.clone()
    };
    let outcome = synthesize_rd(
        strategy,
        &generator.pairs,
        &models,
        count,
        &traversal,
        &format!("synth-{}", strategy.name()),
    )?;

    // Hold out the same share of synthetic samples as of real ones.
    let held = (config.partition.val_fraction * outcome.samples.len() as f64).floor() as usize;
    let mut pool = partitions.debias_base(true);
    pool.extend(outcome.samples[held..].iter());
    let data = image_dataset(&pool, referable_target)?;
    let arch = dls_arch(data.input_dim(), &config.d_dr_dls.hidden);
    let model = train_classifier(&data, &config.d_dr_dls.seeded(config.master_seed, "d-dr-dls"), &arch)?;
    let mut report = evaluate(&model, &partitions.test, system_name(strategy), config.threshold)?;
    report.leftover_sensitivity = Some(evaluate_leftover(&model, &partitions.leftover_rd, config.threshold)?);
    Ok(DebiasOutcome {
        strategy,
        model,
        report,
        synthesis: outcome.report,
        synthetic: outcome.samples,
        traversals: outcome.traversals,
    })
}

/// Relabels the non-manual baseline samples with E-RA-DLS. The test and leftover pools keep manual labels.
pub fn extrapolate_stage(partitions: &mut Partitions, config: &PipelineConfig) -> Result<ExtrapolationOutcome> {
    let spec = config.partition_spec();
    let manual = select_manual(
        &partitions.train_baseline,
        spec.manual_count(),
        derive_seed(config.master_seed, "manual"),
    )?;
    let mut is_manual = vec![false; partitions.train_baseline.len()];
    for &i in &manual {
        is_manual[i] = true;
    }
    let mut manual_samples = Vec::new();
    let mut rest = Vec::new();
    for (s, &m) in partitions.train_baseline.iter_mut().zip(&is_manual) {
        if m {
            manual_samples.push(&*s);
        } else {
            rest.push(s);
        }
    }
    extrapolate_ra_labels(
        &manual_samples,
        &mut rest,
        &config.e_ra_dls,
        &config.e_ra_dls.seeded(config.master_seed, "e-ra-dls"),
        config.manual_train_fraction,
    )
}

/// The whole pipeline in memory.
pub fn run_experiment(config: &PipelineConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let mut partitions = build_partitions(&config.partition_spec(), &config.generator)?;
    let extrapolation = extrapolate_stage(&mut partitions, config)?;
    let baseline = run_baseline(&partitions, config)?;
    let generator = train_generator_stage(&partitions, &baseline.model, config)?;
    let debiased = Strategy::ALL
        .iter()
        .map(|&s| run_debias(s, &partitions, &baseline.model, &generator, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutcome {
        partitions,
        extrapolation,
        baseline,
        generator,
        debiased,
    })
}
