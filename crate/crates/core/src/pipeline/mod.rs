//! End-to-end experiment: partitions, label extrapolation, baseline, generator, debiasing, evaluation.

mod experiment;
mod labels;
mod partitions;

pub use experiment::{
    draw_pairs, evaluate, evaluate_leftover, extrapolate_stage, predict_records, run_baseline, run_debias,
    run_experiment, system_name, train_generator_stage, BaselineOutcome, DebiasOutcome, ExperimentOutcome,
    GeneratorOutcome, BASELINE_SYSTEM,
};
pub use labels::{extrapolate_ra_labels, select_manual, ExtrapolationOutcome};
pub use partitions::{
    build_partitions, scale_histogram, subgroup_counts, PartitionSpec, Partitions, Scale, BASELINE_DARKER_LEVELS,
    BASELINE_LIGHTER_LEVELS, BASELINE_TRAIN_COUNTS, LEFTOVER_RD, MANUAL_LABELS, TEST_DARKER_LEVELS,
    TEST_LIGHTER_LEVELS, TEST_PER_SUBGROUP,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generative::GenerativeConfig;
use crate::nn::{Dataset, TrainConfig};
use crate::synthetic::{GeneratorConfig, ImageSample};
use crate::traversal::{LatentClassifierConfig, TraversalConfig};

/// Stable per-purpose seed derived from the master seed.
pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    // FNV-1a over the purpose tag, then mixed with the master seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in purpose.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    crate::synthetic::splitmix64(master ^ h)
}

/// Hidden widths and optimizer settings of an image classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlsConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for DlsConfig {
    fn default() -> Self {
        DlsConfig {
            hidden: vec![128, 64],
            train: TrainConfig {
                learning_rate: 0.01,
                epochs: 400,
                batch_size: 32,
                seed: 0,
                weight_init_scale: 6f64.sqrt(),
            },
        }
    }
}

impl DlsConfig {
    /// A copy whose seed is fixed by the run's master seed and the model's role.
    pub(crate) fn seeded(&self, master: u64, role: &str) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(master, role) ^ self.train.seed,
            ..self.train.clone()
        }
    }
}

/// Everything that determines one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub master_seed: u64,
    pub partition: PartitionSpec,
    pub generator: GeneratorConfig,
    /// Share of the manual labels used to fit the extrapolation classifier.
    pub manual_train_fraction: f64,
    pub e_ra_dls: DlsConfig,
    pub ra_dls: DlsConfig,
    pub b_dr_dls: DlsConfig,
    pub d_dr_dls: DlsConfig,
    pub generative: GenerativeConfig,
    pub pair_count: usize,
    pub l_ra_dls: LatentClassifierConfig,
    pub l_dr_dls: LatentClassifierConfig,
    pub traversal: TraversalConfig,
    pub threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            master_seed: 0,
            partition: PartitionSpec::default(),
            generator: GeneratorConfig::default(),
            manual_train_fraction: 0.6,
            e_ra_dls: DlsConfig::default(),
            ra_dls: DlsConfig::default(),
            b_dr_dls: DlsConfig::default(),
            d_dr_dls: DlsConfig::default(),
            generative: GenerativeConfig::default(),
            pair_count: 15000,
            l_ra_dls: LatentClassifierConfig::default(),
            l_dr_dls: LatentClassifierConfig {
                train: TrainConfig {
                    learning_rate: 0.2,
                    epochs: 20,
                    ..LatentClassifierConfig::default().train
                },
                ..LatentClassifierConfig::default()
            },
            traversal: TraversalConfig::default(),
            threshold: crate::stats::DEFAULT_THRESHOLD,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        };
        self.partition.validate()?;
        self.generator.validate().map_err(cfg)?;
        for dls in [&self.e_ra_dls, &self.ra_dls, &self.b_dr_dls, &self.d_dr_dls] {
            dls.train.validate().map_err(cfg)?;
        }
        self.generative.train.validate().map_err(cfg)?;
        self.l_ra_dls.train.validate().map_err(cfg)?;
        self.l_dr_dls.train.validate().map_err(cfg)?;
        self.traversal.validate().map_err(cfg)?;
        if !(self.manual_train_fraction > 0.0 && self.manual_train_fraction < 1.0) {
            return Err(Error::Config("manual_train_fraction must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must lie in [0, 1]".into()));
        }
        if self.generative.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        Ok(())
    }

    /// The partition spec with this run's seed.
    pub fn partition_spec(&self) -> PartitionSpec {
        PartitionSpec {
            seed: derive_seed(self.master_seed, "partitions"),
            ..self.partition.clone()
        }
    }
}

/// Flattens sample pixels into a design matrix with class targets.
pub(crate) fn image_dataset(samples: &[&ImageSample], target: impl Fn(&ImageSample) -> usize) -> Result<Dataset> {
    let dim = samples.first().map(|s| s.pixels.data.len()).unwrap_or(0);
    let mut flat = Vec::with_capacity(samples.len() * dim);
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        if s.pixels.data.len() != dim {
            return Err(Error::invalid("samples differ in image size"));
        }
        flat.extend_from_slice(&s.pixels.data);
        targets.push(target(s));
    }
    let inputs = Array2::from_shape_vec((samples.len(), dim), flat).map_err(|e| Error::invalid(e.to_string()))?;
    Dataset::new(inputs, targets)
}

pub(crate) fn image_matrix(samples: &[&ImageSample]) -> Result<Array2<f64>> {
    Ok(image_dataset(samples, |_| 0)?.inputs)
}
