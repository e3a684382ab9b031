use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{preprocess, render, FactorVector, ImageSample, RaThresholds, Subgroup};
use crate::error::{Error, Result};
use crate::stats::Group;

/// Image generation settings shared by every population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub render_size: usize,
    pub image_size: usize,
    pub thresholds: RaThresholds,
    /// How strongly vessel caliber and cup-to-disc ratio track the darker class (0 = not at all).
    pub marker_weight: f64,
    pub marker_noise: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            render_size: 36,
            image_size: 32,
            thresholds: RaThresholds::default(),
            marker_weight: 1.0,
            marker_noise: 0.15,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        if self.image_size == 0 {
            return Err(Error::invalid("image_size must be positive"));
        }
        if !(self.marker_weight.is_finite() && self.marker_noise.is_finite() && self.marker_noise >= 0.0) {
            return Err(Error::invalid("marker settings must be finite, noise non-negative"));
        }
        Ok(())
    }
}

/// How many samples of each DR level to draw for one subgroup.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupRequest {
    pub subgroup: Subgroup,
    pub dr_histogram: [usize; 5],
}

impl SubgroupRequest {
    pub fn count(&self) -> usize {
        self.dr_histogram.iter().sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub id_prefix: String,
    pub requests: Vec<SubgroupRequest>,
    /// Subgroups that must not appear in this population.
    pub excluded: Vec<Subgroup>,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        for r in &self.requests {
            let bad_levels = if r.subgroup.referable() { 0..2 } else { 2..5 };
            if bad_levels.clone().any(|l| r.dr_histogram[l] > 0) {
                return Err(Error::Specification(format!(
                    "{} cannot hold DR levels {:?}: {:?}",
                    r.subgroup, bad_levels, r.dr_histogram
                )));
            }
            if self.excluded.contains(&r.subgroup) && r.count() > 0 {
                return Err(Error::Specification(format!(
                    "{} samples requested but {} is excluded from `{}`",
                    r.count(),
                    r.subgroup,
                    self.id_prefix
                )));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.requests.iter().map(SubgroupRequest::count).sum()
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn sample_factors(
    group: Group,
    dr_severity: u8,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> FactorVector {
    let t = config.thresholds;
    let pigmentation = match group {
        Group::Lighter => rng.gen_range(0.0..t.lo),
        Group::Darker => loop {
            let p = rng.gen_range(t.hi..=1.0);
            if p > t.hi {
                break p;
            }
        },
    };
    let sign = if group.is_darker() { 1.0 } else { -1.0 };
    let base = 0.5 + sign * 0.15 * config.marker_weight;
    // A zero standard deviation is valid for `Normal`.
    let noise = Normal::new(0.0, config.marker_noise).expect("validated noise");
    let vessel_caliber = (base + noise.sample(rng)).clamp(0.0, 1.0);
    let disc_ratio = (base + noise.sample(rng)).clamp(0.0, 1.0);
    FactorVector {
        pigmentation,
        dr_severity,
        vessel_caliber,
        disc_ratio,
        lesion_seed: rng.gen(),
    }
}

/// Draws exactly the requested samples. Sample `i` depends only on `seed` and `i`.
pub fn sample_population(spec: &PopulationSpec, seed: u64, config: &GeneratorConfig) -> Result<Vec<ImageSample>> {
    spec.validate()?;
    config.validate()?;
    let mut jobs = Vec::with_capacity(spec.total());
    for r in &spec.requests {
        for (level, &count) in r.dr_histogram.iter().enumerate() {
            jobs.extend(std::iter::repeat_n((r.subgroup, level as u8), count));
        }
    }
    jobs.iter()
        .enumerate()
        .map(|(i, &(subgroup, level))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ splitmix64(i as u64));
            let factors = sample_factors(subgroup.group(), level, config, &mut rng);
            let raw = render(&factors, config.render_size)?;
            let pixels = preprocess(&raw, config.image_size)?;
            let sample = ImageSample::from_factors(
                format!("{}-{:05}", spec.id_prefix, i),
                pixels,
                factors,
                &config.thresholds,
            )?;
            debug_assert_eq!(sample.subgroup, subgroup);
            Ok(sample)
        })
        .collect()
}
