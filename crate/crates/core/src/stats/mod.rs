//! Evaluation statistics: binomial intervals, Welch tests, parity gaps, ROC/AUC.

mod fairness;
mod inference;
mod roc;
pub mod special;

pub use fairness::{
    equal_odds_gap, equal_opportunity_gap, fairness_report, sensitivity_all_positive, Confusion, DeltaParity,
    FairnessReport, Group, Metric, PredictionRecord, DEFAULT_THRESHOLD,
};
pub use inference::{
    binomial_ci, binomial_ci_with_z, delta_parity, delta_parity_ci, welch_t_proportions, ConfidenceInterval,
    WelchResult, Z_95,
};
pub use roc::{roc_auc, RocCurve, RocPoint};
