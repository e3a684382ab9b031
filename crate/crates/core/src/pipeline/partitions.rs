use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::error::{Error, Result};
use crate::synthetic::{sample_population, GeneratorConfig, ImageSample, PopulationSpec, Subgroup, SubgroupRequest};

/// Full-size subgroup counts of the baseline training pool, in `HL, RL, HD, RD` order.
pub const BASELINE_TRAIN_COUNTS: [usize; 4] = [5330, 10660, 5330, 0];
/// Full-size DR-level histograms of the baseline training pool per appearance group.
pub const BASELINE_LIGHTER_LEVELS: [usize; 5] = [4880, 450, 8312, 1346, 1002];
pub const BASELINE_DARKER_LEVELS: [usize; 5] = [4828, 502, 0, 0, 0];
/// Test pool: equal subgroup sizes, never scaled.
pub const TEST_PER_SUBGROUP: usize = 100;
pub const TEST_LIGHTER_LEVELS: [usize; 5] = [90, 10, 68, 18, 14];
pub const TEST_DARKER_LEVELS: [usize; 5] = [80, 20, 67, 16, 17];
/// Full-size count of the extra referable-darker evaluation pool.
pub const LEFTOVER_RD: usize = 6291;
/// Full-size count of manually labelled appearance samples.
pub const MANUAL_LABELS: usize = 1555;

/// A positive rational scale factor such as `1/20`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub num: u64,
    pub den: u64,
}

impl Scale {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!("scale must be positive, got {num}/{den}")));
        }
        Ok(Scale { num, den })
    }

    pub fn floor(self, n: usize) -> usize {
        (n as u128 * u128::from(self.num) / u128::from(self.den)) as usize
    }

    /// Nearest integer, halves rounded up.
    pub fn round(self, n: usize) -> usize {
        ((2 * n as u128 * u128::from(self.num) + u128::from(self.den)) / (2 * u128::from(self.den))) as usize
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Default for Scale {
    fn default() -> Self {
        Scale { num: 1, den: 20 }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("scale `{s}` is not `num/den` or a positive integer"));
        match s.split_once('/') {
            Some((n, d)) => Scale::new(
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => Scale::new(s.parse().map_err(|_| bad())?, 1),
        }
    }
}

/// Scales a histogram to exactly `total` by flooring each bin and giving the
/// remainder to the largest bin (first one on ties).
pub fn scale_histogram<const N: usize>(bins: &[usize; N], total: usize, scale: Scale) -> [usize; N] {
    let mut out = [0usize; N];
    if total == 0 {
        return out;
    }
    for (o, &b) in out.iter_mut().zip(bins) {
        *o = scale.floor(b);
    }
    let sum: usize = out.iter().sum();
    let largest = (0..N).fold(0, |best, i| if bins[i] > bins[best] { i } else { best });
    if sum <= total {
        out[largest] += total - sum;
    } else {
        out[largest] -= (sum - total).min(out[largest]);
    }
    out
}

/// Counts and proportions that define every pool of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub scale: Scale,
    pub oversample_factor: usize,
    /// Share of each baseline subgroup held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            scale: Scale::default(),
            oversample_factor: 2,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

fn level_split(levels: &[usize; 5], referable: bool) -> [usize; 5] {
    let mut out = [0; 5];
    let range = if referable { 2..5 } else { 0..2 };
    for l in range {
        out[l] = levels[l];
    }
    out
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        Scale::new(self.scale.num, self.scale.den)?;
        if self.oversample_factor == 0 {
            return Err(Error::Config("oversample_factor must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Scaled baseline training counts (validation included), `HL, RL, HD, RD`.
    pub fn baseline_counts(&self) -> [usize; 4] {
        BASELINE_TRAIN_COUNTS.map(|c| self.scale.floor(c))
    }

    pub fn leftover_count(&self) -> usize {
        self.scale.floor(LEFTOVER_RD)
    }

    pub fn manual_count(&self) -> usize {
        self.scale.round(MANUAL_LABELS)
    }

    /// Synthetic RD target: matches the scaled referable-lighter count.
    pub fn synthetic_rd_count(&self) -> usize {
        self.baseline_counts()[Subgroup::RL.index()]
    }

    fn histogram(&self, subgroup: Subgroup, count: usize, lighter: &[usize; 5], darker: &[usize; 5]) -> [usize; 5] {
        let levels = if subgroup.group().is_darker() { darker } else { lighter };
        scale_histogram(&level_split(levels, subgroup.referable()), count, self.scale)
    }

    pub fn baseline_population(&self) -> PopulationSpec {
        let counts = self.baseline_counts();
        PopulationSpec {
            id_prefix: "train".into(),
            requests: Subgroup::ALL
                .iter()
                .map(|&s| SubgroupRequest {
                    subgroup: s,
                    dr_histogram: self.histogram(
                        s,
                        counts[s.index()],
                        &BASELINE_LIGHTER_LEVELS,
                        &BASELINE_DARKER_LEVELS,
                    ),
                })
                .collect(),
            excluded: vec![Subgroup::RD],
        }
    }

    pub fn test_population(&self) -> PopulationSpec {
        let unscaled = Scale { num: 1, den: 1 };
        PopulationSpec {
            id_prefix: "test".into(),
            requests: Subgroup::ALL
                .iter()
                .map(|&s| {
                    let levels = if s.group().is_darker() {
                        &TEST_DARKER_LEVELS
                    } else {
                        &TEST_LIGHTER_LEVELS
                    };
                    SubgroupRequest {
                        subgroup: s,
                        dr_histogram: scale_histogram(&level_split(levels, s.referable()), TEST_PER_SUBGROUP, unscaled),
                    }
                })
                .collect(),
            excluded: vec![],
        }
    }

    /// Extra RD pool with the referable-darker level mix of the test pool.
    pub fn leftover_population(&self) -> PopulationSpec {
        let levels = level_split(&TEST_DARKER_LEVELS, true);
        let n = self.leftover_count();
        let ratio = Scale {
            num: n as u64,
            den: levels.iter().sum::<usize>() as u64,
        };
        PopulationSpec {
            id_prefix: "leftover".into(),
            requests: vec![SubgroupRequest {
                subgroup: Subgroup::RD,
                dr_histogram: scale_histogram(&levels, n, ratio),
            }],
            excluded: vec![Subgroup::HL, Subgroup::RL, Subgroup::HD],
        }
    }
}

/// Every real-sample pool of a run.
#[derive(Clone, Debug)]
pub struct Partitions {
    /// Baseline training pool, validation included.
    pub train_baseline: Vec<ImageSample>,
    /// Indices into `train_baseline` held out for validation.
    pub val_indices: Vec<usize>,
    pub test: Vec<ImageSample>,
    pub leftover_rd: Vec<ImageSample>,
    pub oversample_factor: usize,
}

impl Partitions {
    pub fn val(&self) -> Vec<&ImageSample> {
        self.val_indices.iter().map(|&i| &self.train_baseline[i]).collect()
    }

    /// Baseline samples used for fitting (training pool minus validation).
    pub fn fit_indices(&self) -> Vec<usize> {
        let held: HashSet<usize> = self.val_indices.iter().copied().collect();
        (0..self.train_baseline.len()).filter(|i| !held.contains(i)).collect()
    }

    pub fn fit(&self) -> Vec<&ImageSample> {
        self.fit_indices()
            .into_iter()
            .map(|i| &self.train_baseline[i])
            .collect()
    }

    /// Real part of the debiased pool: baseline samples with every healthy sample
    /// repeated `oversample_factor` times. Only fit samples when `fit_only`.
    pub fn debias_base(&self, fit_only: bool) -> Vec<&ImageSample> {
        let idx: Vec<usize> = if fit_only {
            self.fit_indices()
        } else {
            (0..self.train_baseline.len()).collect()
        };
        let mut out = Vec::new();
        for i in idx {
            let s = &self.train_baseline[i];
            let copies = if s.referable { 1 } else { self.oversample_factor };
            out.extend(std::iter::repeat_n(s, copies));
        }
        out
    }

    /// Fails when any id appears in more than one pool or twice in one pool.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (pool, samples) in [
            ("train", &self.train_baseline),
            ("test", &self.test),
            ("leftover", &self.leftover_rd),
        ] {
            for s in samples {
                if !seen.insert(s.id.as_str()) {
                    return Err(Error::Integrity(format!(
                        "sample id `{}` appears twice (pool {pool})",
                        s.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Subgroup counts of a slice of samples, `HL, RL, HD, RD`.
pub fn subgroup_counts<'a>(samples: impl IntoIterator<Item = &'a ImageSample>) -> [usize; 4] {
    let mut c = [0; 4];
    for s in samples {
        c[s.subgroup.index()] += 1;
    }
    c
}

/// Stratified validation indices: `floor(val_fraction * n)` per subgroup after a seeded shuffle.
fn stratified_val(samples: &[ImageSample], fraction: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in Subgroup::ALL {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].subgroup == s).collect();
        idx.shuffle(&mut rng);
        let k = (fraction * idx.len() as f64).floor() as usize;
        out.extend_from_slice(&idx[..k]);
    }
    out.sort_unstable();
    out
}

pub fn build_partitions(spec: &PartitionSpec, generator: &GeneratorConfig) -> Result<Partitions> {
    spec.validate()?;
    let train_baseline = sample_population(&spec.baseline_population(), derive_seed(spec.seed, "train"), generator)?;
    let test = sample_population(&spec.test_population(), derive_seed(spec.seed, "test"), generator)?;
    let leftover_rd = sample_population(
        &spec.leftover_population(),
        derive_seed(spec.seed, "leftover"),
        generator,
    )?;
    let val_indices = stratified_val(&train_baseline, spec.val_fraction, derive_seed(spec.seed, "val"));
    let p = Partitions {
        train_baseline,
        val_indices,
        test,
        leftover_rd,
        oversample_factor: spec.oversample_factor,
    };
    p.check_disjoint()?;
    if subgroup_counts(&p.train_baseline)[Subgroup::RD.index()] != 0 {
        return Err(Error::Integrity("baseline training pool contains RD samples".into()));
    }
    Ok(p)
}
