use serde::{Deserialize, Serialize};

use super::inference::{binomial_ci, delta_parity_ci, welch_t_proportions, ConfidenceInterval, WelchResult};
use super::roc::{roc_auc, RocPoint};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Protected attribute `A`: lighter is `A = 0`, darker is `A = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Lighter,
    Darker,
}

impl Group {
    pub fn is_darker(self) -> bool {
        self == Group::Darker
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::Lighter => "Lighter-skin individuals",
            Group::Darker => "Darker-skin individuals",
        }
    }

    pub fn code(self) -> char {
        match self {
            Group::Lighter => 'L',
            Group::Darker => 'D',
        }
    }
}

/// One scored test example: `score` is the positive-class probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionRecord {
    pub score: f64,
    pub predicted: bool,
    pub actual: bool,
    pub group: Group,
}

impl PredictionRecord {
    pub fn new(score: f64, actual: bool, group: Group) -> Self {
        Self::with_threshold(score, actual, group, DEFAULT_THRESHOLD)
    }

    pub fn with_threshold(score: f64, actual: bool, group: Group, threshold: f64) -> Self {
        PredictionRecord {
            score,
            predicted: score >= threshold,
            actual,
            group,
        }
    }
}

fn conditional_rate(records: &[PredictionRecord], group: Group, y: bool, y_hat: bool) -> Result<f64> {
    let cell: Vec<_> = records.iter().filter(|r| r.group == group && r.actual == y).collect();
    if cell.is_empty() {
        return Err(Error::UndefinedCell(format!(
            "A={}, Y={}",
            u8::from(group.is_darker()),
            u8::from(y)
        )));
    }
    let hits = cell.iter().filter(|r| r.predicted == y_hat).count();
    Ok(hits as f64 / cell.len() as f64)
}

fn max_gap(records: &[PredictionRecord], ys: &[bool], y_hats: &[bool]) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for &y in ys {
        for &y_hat in y_hats {
            let g0 = conditional_rate(records, Group::Lighter, y, y_hat)?;
            let g1 = conditional_rate(records, Group::Darker, y, y_hat)?;
            gap = gap.max((g0 - g1).abs());
        }
    }
    Ok(gap)
}

/// Largest violation of equalized odds over all `(y, ŷ)` cells.
pub fn equal_odds_gap(records: &[PredictionRecord]) -> Result<f64> {
    max_gap(records, &[false, true], &[false, true])
}

/// Equalized-odds violation restricted to `Y = 1, Ŷ = 1`.
pub fn equal_opportunity_gap(records: &[PredictionRecord]) -> Result<f64> {
    max_gap(records, &[true], &[true])
}

/// A proportion with its 95% normal-approximation interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub n: usize,
    pub ci_half_width: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Metric {
    pub fn from_counts(hits: usize, n: usize, what: &str) -> Result<Self> {
        if n == 0 {
            return Err(Error::UndefinedCell(format!("{what}: no samples")));
        }
        let value = hits as f64 / n as f64;
        let ci = binomial_ci(value, n)?;
        Ok(Metric {
            value,
            n,
            ci_half_width: ci.half_width,
            ci_lo: ci.lo,
            ci_hi: ci.hi,
        })
    }

    fn interval(&self) -> ConfidenceInterval {
        ConfidenceInterval {
            estimate: self.value,
            half_width: self.ci_half_width,
            lo: self.ci_lo,
            hi: self.ci_hi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaParity {
    pub value: f64,
    pub ci_half_width: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Confusion counts of one group at the decision threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

impl Confusion {
    pub fn of(records: &[PredictionRecord], group: Option<Group>) -> Self {
        let mut c = Confusion::default();
        for r in records.iter().filter(|r| group.is_none_or(|g| r.group == g)) {
            match (r.actual, r.predicted) {
                (true, true) => c.tp += 1,
                (true, false) => c.r#fn += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.r#fn
    }

    pub fn positives(&self) -> usize {
        self.tp + self.r#fn
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }
}

/// Fairness summary of one system on one test set. Field names follow the
/// row labels of the published results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    #[serde(rename = "System")]
    pub system: String,
    #[serde(rename = "Decision threshold")]
    pub threshold: f64,
    #[serde(rename = "Accuracy (Overall)")]
    pub accuracy_overall: Metric,
    #[serde(rename = "Accuracy (Lighter-skin individuals)")]
    pub accuracy_lighter: Metric,
    #[serde(rename = "Accuracy (Darker-skin individuals)")]
    pub accuracy_darker: Metric,
    #[serde(rename = "Delta-parity (signed) value")]
    pub delta: DeltaParity,
    #[serde(rename = "Specificity (Lighter-skin individuals)")]
    pub specificity_lighter: Metric,
    #[serde(rename = "Sensitivity (Lighter-skin individuals)")]
    pub sensitivity_lighter: Metric,
    #[serde(rename = "Specificity (Darker-skin individuals)")]
    pub specificity_darker: Metric,
    #[serde(rename = "Sensitivity (Darker-skin individuals)")]
    pub sensitivity_darker: Metric,
    #[serde(rename = "Welch t-test")]
    pub welch: WelchResult,
    #[serde(rename = "Equal-odds gap")]
    pub eq_odds_gap: f64,
    #[serde(rename = "Equal-opportunity gap")]
    pub eq_opp_gap: f64,
    #[serde(rename = "ROC AUC (Lighter-skin individuals)")]
    pub auc_lighter: f64,
    #[serde(rename = "ROC AUC (Darker-skin individuals)")]
    pub auc_darker: f64,
    #[serde(rename = "ROC (Lighter-skin individuals)")]
    pub roc_lighter: Vec<RocPoint>,
    #[serde(rename = "ROC (Darker-skin individuals)")]
    pub roc_darker: Vec<RocPoint>,
    #[serde(
        rename = "Sensitivity (Leftover darker-skin individuals with DR)",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub leftover_sensitivity: Option<Metric>,
}

impl FairnessReport {
    pub fn accuracy(&self, group: Group) -> &Metric {
        match group {
            Group::Lighter => &self.accuracy_lighter,
            Group::Darker => &self.accuracy_darker,
        }
    }

    pub fn sensitivity(&self, group: Group) -> &Metric {
        match group {
            Group::Lighter => &self.sensitivity_lighter,
            Group::Darker => &self.sensitivity_darker,
        }
    }

    pub fn specificity(&self, group: Group) -> &Metric {
        match group {
            Group::Lighter => &self.specificity_lighter,
            Group::Darker => &self.specificity_darker,
        }
    }

    pub fn auc(&self, group: Group) -> f64 {
        match group {
            Group::Lighter => self.auc_lighter,
            Group::Darker => self.auc_darker,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

struct GroupSummary {
    accuracy: Metric,
    sensitivity: Metric,
    specificity: Metric,
    roc: Vec<RocPoint>,
    auc: f64,
}

fn summarize(records: &[PredictionRecord], group: Group) -> Result<GroupSummary> {
    let members: Vec<PredictionRecord> = records.iter().copied().filter(|r| r.group == group).collect();
    if members.is_empty() {
        return Err(Error::UndefinedCell(format!(
            "A={} has no records",
            u8::from(group.is_darker())
        )));
    }
    let c = Confusion::of(&members, None);
    let accuracy = Metric::from_counts(c.tp + c.tn, c.total(), &format!("accuracy ({})", group.label()))?;
    let sensitivity = Metric::from_counts(c.tp, c.positives(), &format!("sensitivity ({})", group.label()))?;
    let specificity = Metric::from_counts(c.tn, c.negatives(), &format!("specificity ({})", group.label()))?;
    let scores: Vec<f64> = members.iter().map(|r| r.score).collect();
    let actual: Vec<bool> = members.iter().map(|r| r.actual).collect();
    let roc = roc_auc(&scores, &actual)?;
    Ok(GroupSummary {
        accuracy,
        sensitivity,
        specificity,
        roc: roc.points,
        auc: roc.auc,
    })
}

/// Builds the full report from scored records. `threshold` is the decision
/// threshold that produced `predicted`; it is recorded, not re-applied.
pub fn fairness_report(system: &str, records: &[PredictionRecord], threshold: f64) -> Result<FairnessReport> {
    let lighter = summarize(records, Group::Lighter)?;
    let darker = summarize(records, Group::Darker)?;
    let all = Confusion::of(records, None);
    let accuracy_overall = Metric::from_counts(all.tp + all.tn, all.total(), "accuracy (overall)")?;
    let d = delta_parity_ci(&lighter.accuracy.interval(), &darker.accuracy.interval());
    let welch = welch_t_proportions(
        lighter.accuracy.value,
        lighter.accuracy.n,
        darker.accuracy.value,
        darker.accuracy.n,
    )?;
    Ok(FairnessReport {
        system: system.to_string(),
        threshold,
        accuracy_overall,
        accuracy_lighter: lighter.accuracy,
        accuracy_darker: darker.accuracy,
        delta: DeltaParity {
            value: d.estimate,
            ci_half_width: d.half_width,
            ci_lo: d.lo,
            ci_hi: d.hi,
        },
        specificity_lighter: lighter.specificity,
        sensitivity_lighter: lighter.sensitivity,
        specificity_darker: darker.specificity,
        sensitivity_darker: darker.sensitivity,
        welch,
        eq_odds_gap: equal_odds_gap(records)?,
        eq_opp_gap: equal_opportunity_gap(records)?,
        auc_lighter: lighter.auc,
        auc_darker: darker.auc,
        roc_lighter: lighter.roc,
        roc_darker: darker.roc,
        leftover_sensitivity: None,
    })
}

/// Sensitivity on an all-positive set: the fraction called positive.
pub fn sensitivity_all_positive(predicted: &[bool]) -> Result<Metric> {
    if predicted.is_empty() {
        return Err(Error::invalid("empty all-positive set"));
    }
    let hits = predicted.iter().filter(|&&p| p).count();
    Metric::from_counts(hits, predicted.len(), "leftover sensitivity")
}
