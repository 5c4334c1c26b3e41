//! Diagnostic test type I/II error inversion and the systematic scale
//! uncertainty it induces on corrected positive counts.

#[cfg(test)]
use crate::interval::{wilson_interval, CountPair};
use thiserror::Error;

/// Sensitivity/specificity of a diagnostic test with their 1-sigma
/// calibration uncertainties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestCharacteristics {
    /// Sensitivity v = P(T+ | infected) = 1 - type II error rate.
    pub sensitivity: f64,
    /// Specificity s = P(T- | not infected) = 1 - type I error rate.
    pub specificity: f64,
    pub sigma_v: f64,
    pub sigma_s: f64,
}

impl TestCharacteristics {
    pub fn new(
        sensitivity: f64,
        specificity: f64,
        sigma_v: f64,
        sigma_s: f64,
    ) -> Result<Self, TestErrError> {
        if !(0.0 < sensitivity && sensitivity <= 1.0) || !(0.0 < specificity && specificity <= 1.0)
        {
            return Err(TestErrError::OutOfRange);
        }
        if sensitivity + specificity <= 1.0 {
            return Err(TestErrError::Uninformative {
                v: sensitivity,
                s: specificity,
            });
        }
        if sigma_v < 0.0 || sigma_s < 0.0 {
            return Err(TestErrError::OutOfRange);
        }
        Ok(Self {
            sensitivity,
            specificity,
            sigma_v,
            sigma_s,
        })
    }

    /// A perfect test: v = s = 1, no calibration uncertainty.
    pub fn perfect() -> Self {
        Self {
            sensitivity: 1.0,
            specificity: 1.0,
            sigma_v: 0.0,
            sigma_s: 0.0,
        }
    }

    /// Forward map from true prevalence to expected positive fraction.
    pub fn positive_rate(&self, p: f64) -> f64 {
        p * self.sensitivity + (1.0 - p) * (1.0 - self.specificity)
    }
}

#[derive(Debug, Error)]
pub enum TestErrError {
    #[error("sensitivity/specificity and uncertainties must lie in their physical ranges")]
    OutOfRange,
    #[error("uninformative test: sensitivity {v} + specificity {s} must exceed 1")]
    Uninformative { v: f64, s: f64 },
    #[error(
        "ill-posed inversion: positive fraction q={q:.6} below the false positive rate {fpr:.6}"
    )]
    BelowFloor { q: f64, fpr: f64 },
    #[error("ill-posed inversion: positive fraction q={q:.6} above the sensitivity {v:.6}")]
    AboveCeiling { q: f64, v: f64 },
    #[error("prevalence must be inside (0,1), got {0}")]
    BadPrevalence(f64),
    #[error("sample size must be positive")]
    ZeroSample,
}

/// Inverts an observed positive fraction q to the true prevalence
/// (q + s - 1) / (v + s - 1).
///
/// Well-posed only on the physical window 1 - s <= q <= v.
pub fn invert_prevalence(q: f64, tc: &TestCharacteristics) -> Result<f64, TestErrError> {
    let fpr = 1.0 - tc.specificity;
    if q < fpr {
        return Err(TestErrError::BelowFloor { q, fpr });
    }
    if q > tc.sensitivity {
        return Err(TestErrError::AboveCeiling {
            q,
            v: tc.sensitivity,
        });
    }
    Ok((q + tc.specificity - 1.0) / (tc.sensitivity + tc.specificity - 1.0))
}

/// First-order error propagation of the inversion with independent
/// (q, s, v) uncertainties.
pub fn propagate_test_error(q: f64, sigma_q: f64, tc: &TestCharacteristics) -> f64 {
    let d = tc.sensitivity + tc.specificity - 1.0;
    let num = d * d * sigma_q * sigma_q
        + (q - tc.sensitivity).powi(2) * tc.sigma_s * tc.sigma_s
        + (q + tc.specificity - 1.0).powi(2) * tc.sigma_v * tc.sigma_v;
    (num / d.powi(4)).sqrt()
}

/// Wilson 68.27% half-width used as the binomial sigma of a rate.
///
/// Works with fractional effective counts (rate is used directly).
fn wilson_sigma(rate: f64, n: u64) -> f64 {
    // Same closed form as wilson_interval but evaluated at an arbitrary
    // rate rather than integer counts.
    let z = crate::special::z_for_level(0.6827);
    let nf = n as f64;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    z * (rate * (1.0 - rate) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom
}

/// Relative systematic scale uncertainty delta-lambda on a corrected
/// positive count.
///
/// Re-inverts the corrected prevalence to the raw rate, takes its
/// binomial sigma from the Wilson 68% half-width, propagates through the
/// inversion and removes the pure statistical component in quadrature.
/// A negative quadrature difference (numerical) clamps at 0, reported by
/// the `clamped` flag.
pub fn renormalize_lambda(
    p_hat: f64,
    n: u64,
    tc: &TestCharacteristics,
) -> Result<LambdaRenormalization, TestErrError> {
    if !(0.0 < p_hat && p_hat < 1.0) {
        return Err(TestErrError::BadPrevalence(p_hat));
    }
    if n == 0 {
        return Err(TestErrError::ZeroSample);
    }
    let q = tc.positive_rate(p_hat);
    let sigma_q = wilson_sigma(q, n);
    let sigma_p_total = propagate_test_error(q, sigma_q, tc);
    let sigma_p_stat = wilson_sigma(p_hat, n);

    let rel_total = sigma_p_total / p_hat;
    let rel_stat = sigma_p_stat / p_hat;
    let diff = rel_total * rel_total - rel_stat * rel_stat;
    Ok(LambdaRenormalization {
        delta_lambda: diff.max(0.0).sqrt(),
        clamped: diff < 0.0,
        raw_rate: q,
        sigma_q,
        sigma_p_total,
        sigma_p_stat,
    })
}

/// Output of [`renormalize_lambda`] with intermediate quantities.
#[derive(Debug, Clone, Copy)]
pub struct LambdaRenormalization {
    /// Relative systematic scale uncertainty (>= 0).
    pub delta_lambda: f64,
    /// The quadrature difference was negative and clamped to zero.
    pub clamped: bool,
    pub raw_rate: f64,
    pub sigma_q: f64,
    pub sigma_p_total: f64,
    pub sigma_p_stat: f64,
}

/// Global test characteristics used when a study has no local values:
/// sensitivity 0.892 +- 0.02, specificity 0.994 +- 0.0014.
pub fn global_characteristics() -> TestCharacteristics {
    TestCharacteristics::new(0.892, 1.0 - 6e-3, 0.02, 1.4e-3).expect("valid global constants")
}
