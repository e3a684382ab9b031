use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided_p;
use crate::error::{Error, Result};

/// Two-sided 95% standard-normal quantile.
pub const Z_95: f64 = 1.959964;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub half_width: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ConfidenceInterval {
    fn from_half_width(estimate: f64, half_width: f64) -> Self {
        ConfidenceInterval {
            estimate,
            half_width,
            lo: estimate - half_width,
            hi: estimate + half_width,
        }
    }
}

/// Normal-approximation interval `p ± z·sqrt(p(1-p)/n)` at 95%. Bounds are not clamped.
pub fn binomial_ci(p: f64, n: usize) -> Result<ConfidenceInterval> {
    binomial_ci_with_z(p, n, Z_95)
}

pub fn binomial_ci_with_z(p: f64, n: usize, z: f64) -> Result<ConfidenceInterval> {
    if n == 0 {
        return Err(Error::invalid("binomial interval needs n >= 1"));
    }
    check_proportion(p)?;
    let half = z * (p * (1.0 - p) / n as f64).sqrt();
    Ok(ConfidenceInterval::from_half_width(p, half))
}

fn check_proportion(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("proportion {p} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

/// Welch t-test treating two accuracies as Bernoulli sample means.
///
/// Variances use the `n - 1` denominator; degrees of freedom follow
/// Welch–Satterthwaite.
pub fn welch_t_proportions(p1: f64, n1: usize, p2: f64, n2: usize) -> Result<WelchResult> {
    check_proportion(p1)?;
    check_proportion(p2)?;
    if n1 < 2 || n2 < 2 {
        return Err(Error::invalid("welch test needs at least two samples per group"));
    }
    let v1 = p1 * (1.0 - p1) / (n1 - 1) as f64;
    let v2 = p2 * (1.0 - p2) / (n2 - 1) as f64;
    let se2 = v1 + v2;
    let diff = p1 - p2;
    if se2 == 0.0 {
        let df = (n1 + n2 - 2) as f64;
        return Ok(if diff == 0.0 {
            WelchResult {
                t: 0.0,
                df,
                p_two_sided: 1.0,
            }
        } else {
            WelchResult {
                t: diff.signum() * f64::INFINITY,
                df,
                p_two_sided: 0.0,
            }
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (v1 * v1 / (n1 - 1) as f64 + v2 * v2 / (n2 - 1) as f64);
    Ok(WelchResult {
        t,
        df,
        p_two_sided: student_t_two_sided_p(t, df),
    })
}

/// Signed parity gap `metric(A=0) - metric(A=1)`; positive favours the lighter group.
pub fn delta_parity(metric_group0: f64, metric_group1: f64) -> f64 {
    metric_group0 - metric_group1
}

/// Interval for the signed gap, combining the two group half-widths in quadrature.
pub fn delta_parity_ci(group0: &ConfidenceInterval, group1: &ConfidenceInterval) -> ConfidenceInterval {
    let delta = delta_parity(group0.estimate, group1.estimate);
    let half = group0.half_width.hypot(group1.half_width);
    ConfidenceInterval::from_half_width(delta, half)
}
