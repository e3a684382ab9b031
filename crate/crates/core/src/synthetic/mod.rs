//! Procedural fundus-like images driven by ground-truth generative factors.

mod population;
mod preprocess;
mod render;

pub(crate) use population::splitmix64;
pub use population::{sample_population, GeneratorConfig, PopulationSpec, SubgroupRequest};
pub use preprocess::{bilinear_resize, preprocess};
pub use render::{lesion_count, render, render_layers, Lesion, RenderLayers, MIN_RENDER_SIZE};

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Group;

/// Hidden generative factors of one synthetic retina.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorVector {
    /// 0 is the lightest background, 1 the darkest.
    pub pigmentation: f64,
    pub dr_severity: u8,
    pub vessel_caliber: f64,
    pub disc_ratio: f64,
    pub lesion_seed: u64,
}

impl FactorVector {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pigmentation", self.pigmentation),
            ("vessel_caliber", self.vessel_caliber),
            ("disc_ratio", self.disc_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.dr_severity > 4 {
            return Err(Error::invalid(format!(
                "dr_severity {} outside 0..=4",
                self.dr_severity
            )));
        }
        Ok(())
    }
}

/// Single-channel pixel grid, row-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "{} pixels for a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RaLabel {
    Lighter,
    Darker,
    Indeterminate,
}

impl RaLabel {
    pub fn group(self) -> Option<Group> {
        match self {
            RaLabel::Lighter => Some(Group::Lighter),
            RaLabel::Darker => Some(Group::Darker),
            RaLabel::Indeterminate => None,
        }
    }

    pub fn from_group(group: Group) -> Self {
        match group {
            Group::Lighter => RaLabel::Lighter,
            Group::Darker => RaLabel::Darker,
        }
    }
}

impl fmt::Display for RaLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RaLabel::Lighter => "lighter",
            RaLabel::Darker => "darker",
            RaLabel::Indeterminate => "indeterminate",
        })
    }
}

impl FromStr for RaLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lighter" => Ok(RaLabel::Lighter),
            "darker" => Ok(RaLabel::Darker),
            "indeterminate" => Ok(RaLabel::Indeterminate),
            _ => Err(Error::invalid(format!("unknown appearance label `{s}`"))),
        }
    }
}

/// Healthy/referable crossed with lighter/darker appearance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subgroup {
    HL,
    RL,
    HD,
    RD,
}

impl Subgroup {
    pub const ALL: [Subgroup; 4] = [Subgroup::HL, Subgroup::RL, Subgroup::HD, Subgroup::RD];

    pub fn new(referable: bool, group: Group) -> Self {
        match (referable, group) {
            (false, Group::Lighter) => Subgroup::HL,
            (true, Group::Lighter) => Subgroup::RL,
            (false, Group::Darker) => Subgroup::HD,
            (true, Group::Darker) => Subgroup::RD,
        }
    }

    pub fn referable(self) -> bool {
        matches!(self, Subgroup::RL | Subgroup::RD)
    }

    pub fn group(self) -> Group {
        match self {
            Subgroup::HL | Subgroup::RL => Group::Lighter,
            Subgroup::HD | Subgroup::RD => Group::Darker,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Subgroup {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "HL" => Ok(Subgroup::HL),
            "RL" => Ok(Subgroup::RL),
            "HD" => Ok(Subgroup::HD),
            "RD" => Ok(Subgroup::RD),
            _ => Err(Error::invalid(format!("unknown subgroup `{s}`"))),
        }
    }
}

/// Where an appearance label came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Manual,
    Extrapolated,
    Synthetic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Manual => "manual",
            Provenance::Extrapolated => "extrapolated",
            Provenance::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(Provenance::Manual),
            "extrapolated" => Ok(Provenance::Extrapolated),
            "synthetic" => Ok(Provenance::Synthetic),
            _ => Err(Error::invalid(format!("unknown provenance `{s}`"))),
        }
    }
}

/// Pigmentation cut points for the three-way appearance label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaThresholds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RaThresholds {
    fn default() -> Self {
        RaThresholds { lo: 0.35, hi: 0.65 }
    }
}

impl RaThresholds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let t = RaThresholds { lo, hi };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.lo && self.lo < self.hi && self.hi <= 1.0) {
            return Err(Error::invalid(format!(
                "appearance thresholds need 0 <= lo < hi <= 1, got ({}, {})",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Labels {
    pub dr_level: u8,
    pub referable: bool,
    pub ra_label: RaLabel,
}

/// Ground-truth labels implied by the factors.
pub fn assign_labels(factors: &FactorVector, thresholds: &RaThresholds) -> Result<Labels> {
    thresholds.validate()?;
    factors.validate()?;
    let ra_label = if factors.pigmentation < thresholds.lo {
        RaLabel::Lighter
    } else if factors.pigmentation > thresholds.hi {
        RaLabel::Darker
    } else {
        RaLabel::Indeterminate
    };
    Ok(Labels {
        dr_level: factors.dr_severity,
        referable: factors.dr_severity >= 2,
        ra_label,
    })
}

thread_local! {
    static FACTOR_READS: Cell<usize> = const { Cell::new(0) };
}

/// Number of ground-truth factor reads made on this thread so far.
pub fn factor_reads() -> usize {
    FACTOR_READS.with(Cell::get)
}

/// A labelled image. Ground-truth factors are hidden behind an audited accessor.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub pixels: Image,
    /// `None` for synthetic samples, which carry no severity grade.
    pub dr_level: Option<u8>,
    pub referable: bool,
    pub ra_label: RaLabel,
    pub subgroup: Subgroup,
    pub ra_provenance: Provenance,
    factors: Option<FactorVector>,
}

impl ImageSample {
    pub fn from_factors(id: String, pixels: Image, factors: FactorVector, thresholds: &RaThresholds) -> Result<Self> {
        let labels = assign_labels(&factors, thresholds)?;
        let group = labels.ra_label.group().ok_or_else(|| {
            Error::Specification(format!(
                "pigmentation {} lies in the indeterminate band",
                factors.pigmentation
            ))
        })?;
        Ok(ImageSample {
            id,
            pixels,
            dr_level: Some(labels.dr_level),
            referable: labels.referable,
            ra_label: labels.ra_label,
            subgroup: Subgroup::new(labels.referable, group),
            ra_provenance: Provenance::Manual,
            factors: Some(factors),
        })
    }

    pub fn synthetic(id: String, pixels: Image, subgroup: Subgroup) -> Self {
        ImageSample {
            id,
            pixels,
            dr_level: None,
            referable: subgroup.referable(),
            ra_label: RaLabel::from_group(subgroup.group()),
            subgroup,
            ra_provenance: Provenance::Synthetic,
            factors: None,
        }
    }

    /// Rebuilds a sample read back from disk.
    pub(crate) fn restore(
        id: String,
        pixels: Image,
        dr_level: Option<u8>,
        ra_label: RaLabel,
        ra_provenance: Provenance,
        factors: Option<FactorVector>,
    ) -> Result<Self> {
        let referable = dr_level.map(|l| l >= 2).unwrap_or(true);
        let group = ra_label
            .group()
            .ok_or_else(|| Error::Integrity("indeterminate sample in a pool".into()))?;
        Ok(ImageSample {
            id,
            pixels,
            dr_level,
            referable,
            ra_label,
            subgroup: Subgroup::new(referable, group),
            ra_provenance,
            factors,
        })
    }

    /// Ground truth for test oracles and the generator. Every call is counted.
    pub fn oracle_factors(&self) -> Option<&FactorVector> {
        FACTOR_READS.with(|c| c.set(c.get() + 1));
        self.factors.as_ref()
    }

    pub fn group(&self) -> Group {
        self.subgroup.group()
    }

    /// Replaces the appearance label and keeps `subgroup` consistent.
    pub fn relabel(&mut self, label: RaLabel, provenance: Provenance) -> Result<()> {
        let group = label
            .group()
            .ok_or_else(|| Error::invalid("cannot relabel a pooled sample as indeterminate"))?;
        self.ra_label = label;
        self.ra_provenance = provenance;
        self.subgroup = Subgroup::new(self.referable, group);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factors(pig: f64, sev: u8) -> FactorVector {
        FactorVector {
            pigmentation: pig,
            dr_severity: sev,
            vessel_caliber: 0.5,
            disc_ratio: 0.5,
            lesion_seed: 1,
        }
    }

    #[test]
    fn referability_follows_dr_level() {
        let t = RaThresholds::default();
        assert!(assign_labels(&factors(0.1, 2), &t).unwrap().referable);
        assert!(!assign_labels(&factors(0.1, 1), &t).unwrap().referable);
        assert!(!assign_labels(&factors(0.1, 0), &t).unwrap().referable);
        assert!(assign_labels(&factors(0.1, 4), &t).unwrap().referable);
    }

    #[test]
    fn appearance_bands() {
        let t = RaThresholds::new(0.35, 0.65).unwrap();
        assert_eq!(
            assign_labels(&factors(0.5, 0), &t).unwrap().ra_label,
            RaLabel::Indeterminate
        );
        assert_eq!(assign_labels(&factors(0.2, 0), &t).unwrap().ra_label, RaLabel::Lighter);
        assert_eq!(assign_labels(&factors(0.9, 0), &t).unwrap().ra_label, RaLabel::Darker);
        assert_eq!(
            assign_labels(&factors(0.35, 0), &t).unwrap().ra_label,
            RaLabel::Indeterminate
        );
    }

    #[test]
    fn invalid_thresholds_and_factors() {
        assert!(RaThresholds::new(0.6, 0.6).is_err());
        assert!(RaThresholds::new(0.7, 0.3).is_err());
        let bad = RaThresholds { lo: 0.7, hi: 0.2 };
        assert!(matches!(
            assign_labels(&factors(0.1, 0), &bad),
            Err(Error::InvalidArgument(_))
        ));
        assert!(factors(1.2, 0).validate().is_err());
        assert!(factors(0.2, 5).validate().is_err());
    }

    #[test]
    fn subgroup_consistency() {
        for s in Subgroup::ALL {
            assert_eq!(Subgroup::new(s.referable(), s.group()), s);
            assert_eq!(s.to_string().parse::<Subgroup>().unwrap(), s);
        }
    }

    #[test]
    fn factor_reads_are_counted() {
        let t = RaThresholds::default();
        let s = ImageSample::from_factors("x".into(), Image::zeros(2, 2), factors(0.1, 3), &t).unwrap();
        assert_eq!(s.subgroup, Subgroup::RL);
        let before = factor_reads();
        let _ = s.oracle_factors();
        assert_eq!(factor_reads(), before + 1);
    }
}
