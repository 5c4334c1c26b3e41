//! Single binomial proportion confidence interval estimators.

use crate::special::{
    beta_quantile, binom_cdf, binom_pmf, binom_sf_ge, chi2_quantile_1, z_for_level,
};
use thiserror::Error;

/// A binomial observation: `k` successes out of `n` trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountPair {
    pub k: u64,
    pub n: u64,
}

impl CountPair {
    pub fn new(k: u64, n: u64) -> Result<Self, IntervalError> {
        if n == 0 {
            return Err(IntervalError::ZeroTrials);
        }
        if k > n {
            return Err(IntervalError::SuccessesExceedTrials { k, n });
        }
        Ok(Self { k, n })
    }

    /// Maximum likelihood rate k/n.
    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

#[derive(Debug, Error)]
pub enum IntervalError {
    #[error("number of trials must be positive")]
    ZeroTrials,
    #[error("successes k={k} exceed trials n={n}")]
    SuccessesExceedTrials { k: u64, n: u64 },
    #[error("confidence level must be in (0,1), got {0}")]
    BadLevel(f64),
}

/// Which estimator produced an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Wald,
    Wilson,
    ClopperPearson,
    MidP,
    LlrAsymptotic,
    BeltInversion,
    ConditionalCp,
    ConditionalMidP,
    KatzLog,
    AsinhRatio,
    BootstrapPrc,
    BootstrapBc,
    BootstrapBca,
    ProfileLlr,
    JointLlr,
    Credible,
    MomGaussian,
    NlGaussian,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Wald => "wald",
            Method::Wilson => "wilson",
            Method::ClopperPearson => "clopper-pearson",
            Method::MidP => "mid-p",
            Method::LlrAsymptotic => "llr",
            Method::BeltInversion => "belt",
            Method::ConditionalCp => "conditional-cp",
            Method::ConditionalMidP => "conditional-mid-p",
            Method::KatzLog => "katz",
            Method::AsinhRatio => "asinh",
            Method::BootstrapPrc => "bootstrap-prc",
            Method::BootstrapBc => "bootstrap-bc",
            Method::BootstrapBca => "bootstrap-bca",
            Method::ProfileLlr => "profile-llr",
            Method::JointLlr => "joint-llr",
            Method::Credible => "credible",
            Method::MomGaussian => "mom",
            Method::NlGaussian => "nl",
        };
        f.write_str(s)
    }
}

/// Qualifiers attached to an interval by its constructor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntervalFlags {
    /// Endpoints leave [0, 1] (Wald is reported unclipped).
    pub unphysical: bool,
    /// Belt inversion produced a non-contiguous acceptance union.
    pub non_contiguous: bool,
    /// Upper endpoint is unbounded (ratio with zero denominator counts).
    pub upper_unbounded: bool,
}

/// A two-sided interval estimate with its central point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Confidence / credibility level 1 - alpha.
    pub level: f64,
    /// Central estimate; k/n for most methods, the score-shifted center
    /// for Wilson.
    pub point: f64,
    pub method: Method,
    pub flags: IntervalFlags,
}

impl IntervalEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

fn check_level(level: f64) -> Result<(), IntervalError> {
    if level <= 0.0 || level >= 1.0 {
        return Err(IntervalError::BadLevel(level));
    }
    Ok(())
}

/// Normal approximation (Wald) interval, p-hat +- z * sqrt(p(1-p)/n).
///
/// Endpoints are reported unclipped; `flags.unphysical` marks intervals
/// leaving [0, 1]. Degenerate k=0 or k=n observations give a zero-width
/// interval at the rate estimate.
pub fn wald_interval(c: CountPair, level: f64) -> Result<IntervalEstimate, IntervalError> {
    check_level(level)?;
    let p = c.rate();
    let z = z_for_level(level);
    let half = z * (p * (1.0 - p) / c.n as f64).sqrt();
    let (lower, upper) = (p - half, p + half);
    Ok(IntervalEstimate {
        lower,
        upper,
        level,
        point: p,
        method: Method::Wald,
        flags: IntervalFlags {
            unphysical: lower < 0.0 || upper > 1.0,
            ..Default::default()
        },
    })
}

/// Wilson score interval.
///
/// The central point is the score-test center (k + z^2/2) / (n + z^2),
/// not k/n.
pub fn wilson_interval(c: CountPair, level: f64) -> Result<IntervalEstimate, IntervalError> {
    check_level(level)?;
    let z = z_for_level(level);
    let n = c.n as f64;
    let p = c.rate();
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(IntervalEstimate {
        lower: center - half,
        upper: center + half,
        level,
        point: center,
        method: Method::Wilson,
        flags: IntervalFlags::default(),
    })
}

/// Clopper-Pearson `exact` interval from beta quantiles.
pub fn clopper_pearson_interval(
    c: CountPair,
    level: f64,
) -> Result<IntervalEstimate, IntervalError> {
    check_level(level)?;
    let alpha = 1.0 - level;
    let (k, n) = (c.k, c.n);
    let lower = if k == 0 {
        0.0
    } else {
        beta_quantile(alpha / 2.0, k as f64, (n - k) as f64 + 1.0)
    };
    let upper = if k == n {
        1.0
    } else {
        beta_quantile(1.0 - alpha / 2.0, k as f64 + 1.0, (n - k) as f64)
    };
    Ok(IntervalEstimate {
        lower,
        upper,
        level,
        point: c.rate(),
        method: Method::ClopperPearson,
        flags: IntervalFlags::default(),
    })
}

/// Lancaster mid-P interval.
///
/// The lower endpoint solves 1/2 P(X=k) + P(X>k) = alpha/2 and the upper
/// endpoint solves 1/2 P(X=k) + P(X<k) = alpha/2, both by bisection on p.
/// The interval is strictly inside Clopper-Pearson for 0 < k < n.
pub fn midp_interval(c: CountPair, level: f64) -> Result<IntervalEstimate, IntervalError> {
    check_level(level)?;
    let alpha = 1.0 - level;
    let target = alpha / 2.0;
    let (k, n) = (c.k, c.n);

    // Right-tail mid-p as a function of p: increasing from 0 to 1.
    let right = |p: f64| 0.5 * binom_pmf(k, n, p) + binom_sf_ge(k + 1, n, p);
    // Left-tail mid-p: decreasing in p.
    let left = |p: f64| {
        let below = if k == 0 { 0.0 } else { binom_cdf(k - 1, n, p) };
        0.5 * binom_pmf(k, n, p) + below
    };

    let lower = if k == 0 {
        0.0
    } else {
        bisect_increasing(&right, target)
    };
    let upper = if k == n {
        1.0
    } else {
        bisect_decreasing(&left, target)
    };
    Ok(IntervalEstimate {
        lower,
        upper,
        level,
        point: c.rate(),
        method: Method::MidP,
        flags: IntervalFlags::default(),
    })
}

fn bisect_increasing(f: &dyn Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn bisect_decreasing(f: &dyn Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Binomial log-likelihood ratio test statistic at null rate `p0`,
/// with the 0 ln 0 = 0 convention for boundary counts.
pub fn binom_llr(k: u64, n: u64, p0: f64) -> f64 {
    let p_hat = k as f64 / n as f64;
    let term = |count: f64, rate_hat: f64, rate0: f64| -> f64 {
        if count == 0.0 {
            0.0
        } else if rate0 <= 0.0 {
            f64::INFINITY
        } else {
            count * (rate_hat / rate0).ln()
        }
    };
    2.0 * (term(k as f64, p_hat, p0) + term((n - k) as f64, 1.0 - p_hat, 1.0 - p0))
}

/// Likelihood-ratio interval with the asymptotic chi-squared(1) threshold.
pub fn llr_interval_asymptotic(
    c: CountPair,
    level: f64,
) -> Result<IntervalEstimate, IntervalError> {
    check_level(level)?;
    let threshold = chi2_quantile_1(level);
    let (k, n) = (c.k, c.n);
    let p_hat = c.rate();

    // Bracket from the Wilson interval inflated by 3 around its center;
    // always brackets the LLR region for n >= 1.
    let wilson = wilson_interval(c, level)?;
    let lo_bracket = (wilson.point - 3.0 * (wilson.point - wilson.lower)).max(0.0);
    let hi_bracket = (wilson.point + 3.0 * (wilson.upper - wilson.point)).min(1.0);

    let f = |p0: f64| binom_llr(k, n, p0) - threshold;

    let lower = if k == 0 {
        0.0
    } else {
        // f decreasing on [lo_bracket, p_hat]
        let (mut lo, mut hi) = (lo_bracket, p_hat);
        debug_assert!(f(lo) > 0.0 || lo == 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let upper = if k == n {
        1.0
    } else {
        // f increasing on [p_hat, hi_bracket]
        let (mut lo, mut hi) = (p_hat, hi_bracket);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    Ok(IntervalEstimate {
        lower,
        upper,
        level,
        point: p_hat,
        method: Method::LlrAsymptotic,
        flags: IntervalFlags::default(),
    })
}
