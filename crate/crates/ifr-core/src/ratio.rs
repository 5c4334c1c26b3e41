//! Confidence intervals for the ratio r = p1/p2 of two independent
//! binomial proportions (deaths over population vs positives over tests).

use crate::interval::{midp_interval, CountPair, IntervalEstimate, IntervalFlags, Method};
use crate::rng::substream;
use crate::special::{beta_quantile, chi2_quantile_1, normal_cdf, normal_quantile, z_for_level};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use thiserror::Error;

/// The four counts of the double ratio: (k1, n1) for the numerator
/// binomial and (k2, n2) for the denominator binomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatioCounts {
    pub k1: u64,
    pub n1: u64,
    pub k2: u64,
    pub n2: u64,
}

impl RatioCounts {
    pub fn new(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<Self, RatioError> {
        if n1 == 0 || n2 == 0 {
            return Err(RatioError::ZeroTrials);
        }
        if k1 > n1 || k2 > n2 {
            return Err(RatioError::SuccessesExceedTrials);
        }
        Ok(Self { k1, n1, k2, n2 })
    }

    /// Maximum likelihood ratio estimate (k1/n1) / (k2/n2).
    pub fn ratio(&self) -> f64 {
        (self.k1 as f64 / self.n1 as f64) / (self.k2 as f64 / self.n2 as f64)
    }

    /// Standard error of ln(r) from the delta method.
    pub fn log_se(&self) -> f64 {
        (1.0 / self.k1 as f64 - 1.0 / self.n1 as f64 + 1.0 / self.k2 as f64
            - 1.0 / self.n2 as f64)
            .sqrt()
    }
}

#[derive(Debug, Error)]
pub enum RatioError {
    #[error("number of trials must be positive")]
    ZeroTrials,
    #[error("successes exceed trials")]
    SuccessesExceedTrials,
    #[error("confidence level must be in (0,1), got {0}")]
    BadLevel(f64),
    #[error("k1 + k2 must be positive for the conditional construction")]
    EmptyConditional,
    #[error("zero count k{0} not supported by this transform (enable the continuity correction)")]
    ZeroCount(u8),
    #[error("boundary counts: profile construction needs interior MLE; use the MC belt instead")]
    BoundaryCounts,
    #[error("all bootstrap resamples were degenerate")]
    DegenerateBootstrap,
    #[error("invalid bootstrap configuration: {0}")]
    BadBootstrapConfig(String),
}

fn check_level(level: f64) -> Result<(), RatioError> {
    if level <= 0.0 || level >= 1.0 {
        return Err(RatioError::BadLevel(level));
    }
    Ok(())
}

/// Base interval for the conditional construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionalBase {
    ClopperPearson,
    MidP,
}

/// Conditional ratio interval (Nelson).
///
/// Conditions on N = k1 + k2, builds an interval for the conditional
/// binomial parameter and maps its endpoints through
/// r = (n2/n1) p/(1-p). With k2 = 0 and k1 > 0 the upper endpoint is
/// infinite and flagged as unbounded.
pub fn conditional_ratio_interval(
    c: RatioCounts,
    level: f64,
    base: ConditionalBase,
) -> Result<IntervalEstimate, RatioError> {
    check_level(level)?;
    if c.k1 + c.k2 == 0 {
        return Err(RatioError::EmptyConditional);
    }
    let alpha = 1.0 - level;
    let (k1, k2) = (c.k1 as f64, c.k2 as f64);
    let (p_lo, p_hi) = match base {
        ConditionalBase::ClopperPearson => {
            let lo = if c.k1 == 0 {
                0.0
            } else {
                beta_quantile(alpha / 2.0, k1, k2 + 1.0)
            };
            let hi = if c.k2 == 0 {
                1.0
            } else {
                beta_quantile(1.0 - alpha / 2.0, k1 + 1.0, k2)
            };
            (lo, hi)
        }
        ConditionalBase::MidP => {
            let n = c.k1 + c.k2;
            let iv = midp_interval(CountPair::new(c.k1, n).expect("k1 <= k1+k2"), level)
                .map_err(|_| RatioError::BadLevel(level))?;
            (iv.lower, iv.upper)
        }
    };
    let scale = c.n2 as f64 / c.n1 as f64;
    let lower = scale * p_lo / (1.0 - p_lo);
    let (upper, unbounded) = if p_hi >= 1.0 {
        (f64::INFINITY, true)
    } else {
        (scale * p_hi / (1.0 - p_hi), false)
    };
    Ok(IntervalEstimate {
        lower,
        upper,
        level,
        point: c.ratio(),
        method: match base {
            ConditionalBase::ClopperPearson => Method::ConditionalCp,
            ConditionalBase::MidP => Method::ConditionalMidP,
        },
        flags: IntervalFlags {
            upper_unbounded: unbounded,
            ..Default::default()
        },
    })
}

/// Katz logarithmic transform interval exp(ln r +- z se).
///
/// `continuity_correction` replaces zero cells by k + 1/2 instead of
/// erroring; off by default in callers.
pub fn katz_log_interval(
    c: RatioCounts,
    level: f64,
    continuity_correction: bool,
) -> Result<IntervalEstimate, RatioError> {
    check_level(level)?;
    let fc = apply_continuity(c, continuity_correction)?;
    let z = z_for_level(level);
    let se = fc.log_se();
    let ln_r = fc.ratio().ln();
    Ok(IntervalEstimate {
        lower: (ln_r - z * se).exp(),
        upper: (ln_r + z * se).exp(),
        level,
        point: fc.ratio(),
        method: Method::KatzLog,
        flags: IntervalFlags::default(),
    })
}

/// Inverse hyperbolic sine transform interval exp(ln r +- 2 asinh(z se / 2)).
pub fn asinh_ratio_interval(
    c: RatioCounts,
    level: f64,
    continuity_correction: bool,
) -> Result<IntervalEstimate, RatioError> {
    check_level(level)?;
    let fc = apply_continuity(c, continuity_correction)?;
    let z = z_for_level(level);
    let se = fc.log_se();
    let half = 2.0 * (z / 2.0 * se).asinh();
    let ln_r = fc.ratio().ln();
    Ok(IntervalEstimate {
        lower: (ln_r - half).exp(),
        upper: (ln_r + half).exp(),
        level,
        point: fc.ratio(),
        method: Method::AsinhRatio,
        flags: IntervalFlags::default(),
    })
}

/// Fractional counts produced by the +1/2 continuity correction.
#[derive(Debug, Clone, Copy)]
struct FracCounts {
    k1: f64,
    n1: f64,
    k2: f64,
    n2: f64,
}

impl FracCounts {
    fn ratio(&self) -> f64 {
        (self.k1 / self.n1) / (self.k2 / self.n2)
    }

    fn log_se(&self) -> f64 {
        (1.0 / self.k1 - 1.0 / self.n1 + 1.0 / self.k2 - 1.0 / self.n2).sqrt()
    }
}

fn apply_continuity(c: RatioCounts, enabled: bool) -> Result<FracCounts, RatioError> {
    let mut out = FracCounts {
        k1: c.k1 as f64,
        n1: c.n1 as f64,
        k2: c.k2 as f64,
        n2: c.n2 as f64,
    };
    if c.k1 == 0 {
        if !enabled {
            return Err(RatioError::ZeroCount(1));
        }
        out.k1 = 0.5;
    }
    if c.k2 == 0 {
        if !enabled {
            return Err(RatioError::ZeroCount(2));
        }
        out.k2 = 0.5;
    }
    Ok(out)
}

/// Bootstrap variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapVariant {
    /// Percentile.
    Prc,
    /// Bias corrected only (acceleration fixed at zero).
    Bc,
    /// Bias corrected and accelerated (jackknife).
    Bca,
}

/// Bootstrap configuration.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapConfig {
    pub replicates: u64,
    pub variant: BootstrapVariant,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(replicates: u64, variant: BootstrapVariant, seed: u64) -> Result<Self, RatioError> {
        if replicates < 1000 {
            return Err(RatioError::BadBootstrapConfig(format!(
                "need at least 1000 replicates, got {replicates}"
            )));
        }
        Ok(Self {
            replicates,
            variant,
            seed,
        })
    }
}

/// Outcome of a bootstrap run, including the count of discarded
/// degenerate resamples (k2* = 0, where the ratio is undefined).
#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub interval: IntervalEstimate,
    pub discarded: u64,
    pub z0: f64,
    pub acceleration: f64,
}

/// Parametric two-binomial bootstrap interval for the ratio.
///
/// Draws k1* ~ Binom(n1, k1/n1) and k2* ~ Binom(n2, k2/n2) per replicate
/// (identical in law to non-parametric resampling for this model).
pub fn bootstrap_ratio_interval(
    c: RatioCounts,
    level: f64,
    cfg: BootstrapConfig,
) -> Result<BootstrapOutcome, RatioError> {
    check_level(level)?;
    if c.k2 == 0 {
        return Err(RatioError::ZeroCount(2));
    }
    let p1 = c.k1 as f64 / c.n1 as f64;
    let p2 = c.k2 as f64 / c.n2 as f64;
    let d1 = Binomial::new(c.n1, p1).expect("valid binomial");
    let d2 = Binomial::new(c.n2, p2).expect("valid binomial");

    // Per-chunk substreams keyed by chunk index: schedule-independent
    // parallelism with a fixed draw order inside each chunk.
    const CHUNK: u64 = 4096;
    let chunks = cfg.replicates.div_ceil(CHUNK);
    let mut results: Vec<(Vec<f64>, u64)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = substream(cfg.seed, chunk);
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(cfg.replicates);
            let mut vals = Vec::with_capacity((hi - lo) as usize);
            let mut discarded = 0u64;
            for _ in lo..hi {
                let k1s = d1.sample(&mut rng) as f64;
                let k2s = d2.sample(&mut rng) as f64;
                if k2s == 0.0 {
                    discarded += 1;
                    continue;
                }
                vals.push((k1s / c.n1 as f64) / (k2s / c.n2 as f64));
            }
            (vals, discarded)
        })
        .collect();

    let mut sample: Vec<f64> = Vec::with_capacity(cfg.replicates as usize);
    let mut discarded = 0u64;
    for (vals, d) in results.drain(..) {
        sample.extend(vals);
        discarded += d;
    }
    if sample.is_empty() {
        return Err(RatioError::DegenerateBootstrap);
    }
    sample.sort_by(f64::total_cmp);

    let alpha = 1.0 - level;
    let r_hat = c.ratio();
    let (z0, a) = match cfg.variant {
        BootstrapVariant::Prc => (0.0, 0.0),
        BootstrapVariant::Bc => (bias_correction(&sample, r_hat), 0.0),
        BootstrapVariant::Bca => (bias_correction(&sample, r_hat), jackknife_acceleration(c)),
    };

    let adjusted = |q: f64| -> f64 {
        if cfg.variant == BootstrapVariant::Prc {
            return q;
        }
        let zq = normal_quantile(q);
        normal_cdf(z0 + (z0 + zq) / (1.0 - a * (z0 + zq)))
    };
    let lower = percentile(&sample, adjusted(alpha / 2.0));
    let upper = percentile(&sample, adjusted(1.0 - alpha / 2.0));
    Ok(BootstrapOutcome {
        interval: IntervalEstimate {
            lower,
            upper,
            level,
            point: r_hat,
            method: match cfg.variant {
                BootstrapVariant::Prc => Method::BootstrapPrc,
                BootstrapVariant::Bc => Method::BootstrapBc,
                BootstrapVariant::Bca => Method::BootstrapBca,
            },
            flags: IntervalFlags::default(),
        },
        discarded,
        z0,
        acceleration: a,
    })
}

/// z0 = Phi^-1(G(r_hat)) where G is the bootstrap empirical CDF.
fn bias_correction(sorted: &[f64], r_hat: f64) -> f64 {
    let below = sorted.partition_point(|&x| x < r_hat);
    let frac = (below as f64 / sorted.len() as f64).clamp(1e-12, 1.0 - 1e-12);
    normal_quantile(frac)
}

/// Acceleration from jackknife residuals over the pooled Bernoulli
/// representation of the two samples (n1 + n2 leave-one-out estimates,
/// of which only four are distinct).
fn jackknife_acceleration(c: RatioCounts) -> f64 {
    let (k1, n1, k2, n2) = (c.k1 as f64, c.n1 as f64, c.k2 as f64, c.n2 as f64);
    // Leave-one-out ratio estimates and their multiplicities.
    let cases: [(f64, f64); 4] = [
        (((k1 - 1.0) / (n1 - 1.0)) / (k2 / n2), k1),
        ((k1 / (n1 - 1.0)) / (k2 / n2), n1 - k1),
        ((k1 / n1) / ((k2 - 1.0) / (n2 - 1.0)), k2),
        ((k1 / n1) / (k2 / (n2 - 1.0)), n2 - k2),
    ];
    let total = n1 + n2;
    let mean: f64 = cases.iter().map(|&(v, m)| v * m).sum::<f64>() / total;
    let mut sum2 = 0.0;
    let mut sum3 = 0.0;
    for &(v, m) in &cases {
        let d = mean - v;
        sum2 += m * d * d;
        sum3 += m * d * d * d;
    }
    if sum2 <= 0.0 {
        return 0.0;
    }
    sum3 / (6.0 * sum2.powf(1.5))
}

/// Empirical quantile with linear interpolation between order statistics.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let idx = q * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = idx - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Joint log-likelihood of the two binomials in the (r, p1)
/// parametrization, without the constant binomial coefficients.
fn joint_ln_likelihood(c: RatioCounts, r: f64, p1: f64) -> f64 {
    let (k1, n1, k2, n2) = (c.k1 as f64, c.n1 as f64, c.k2 as f64, c.n2 as f64);
    let p2 = p1 / r;
    if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
        return f64::NEG_INFINITY;
    }
    let term = |count: f64, p: f64| -> f64 {
        if count == 0.0 {
            0.0
        } else if p <= 0.0 {
            f64::NEG_INFINITY
        } else {
            count * p.ln()
        }
    };
    term(k1, p1) + term(n1 - k1, 1.0 - p1) + term(k2, p2) + term(n2 - k2, 1.0 - p2)
}

/// Closed-form nuisance profile: the p1 value maximizing the joint
/// likelihood at fixed ratio r0 (negative branch of the quadratic root).
pub fn profile_nuisance_root(c: RatioCounts, r0: f64) -> f64 {
    let (k1, n1, k2, n2) = (c.k1 as f64, c.n1 as f64, c.k2 as f64, c.n2 as f64);
    let b = k1 + n2 + k2 * r0 + n1 * r0;
    let disc = b * b - 4.0 * (n1 + n2) * (k1 * r0 + k2 * r0);
    (b - disc.max(0.0).sqrt()) / (2.0 * (n1 + n2))
}

/// Profile log-likelihood ratio statistic at null ratio r0.
pub fn profile_llr_statistic(c: RatioCounts, r0: f64) -> f64 {
    let r_hat = c.ratio();
    let p1_hat = c.k1 as f64 / c.n1 as f64;
    let p1_star = profile_nuisance_root(c, r0);
    -2.0 * (joint_ln_likelihood(c, r0, p1_star) - joint_ln_likelihood(c, r_hat, p1_hat))
}

/// Profile likelihood ratio interval for the ratio, with the nuisance p1
/// profiled out in closed form and endpoints found by bisection outward
/// from the MLE.
pub fn profile_llr_interval(c: RatioCounts, level: f64) -> Result<IntervalEstimate, RatioError> {
    check_level(level)?;
    if c.k1 == 0 || c.k1 == c.n1 || c.k2 == 0 || c.k2 == c.n2 {
        return Err(RatioError::BoundaryCounts);
    }
    let threshold = chi2_quantile_1(level);
    let r_hat = c.ratio();
    let f = |r0: f64| profile_llr_statistic(c, r0) - threshold;

    // Expand outward until the statistic exceeds the threshold.
    let mut lo_out = r_hat;
    loop {
        lo_out *= 0.5;
        if f(lo_out) > 0.0 {
            break;
        }
        if lo_out < 1e-300 {
            return Err(RatioError::BoundaryCounts);
        }
    }
    let mut hi_out = r_hat;
    loop {
        hi_out *= 2.0;
        if f(hi_out) > 0.0 {
            break;
        }
        if hi_out > 1e300 {
            return Err(RatioError::BoundaryCounts);
        }
    }
    let bisect = |mut inside: f64, mut outside: f64| -> f64 {
        // invariant: f(inside) <= 0 < f(outside)
        while (inside - outside).abs() > 1e-8 {
            let mid = 0.5 * (inside + outside);
            if f(mid) > 0.0 {
                outside = mid;
            } else {
                inside = mid;
            }
        }
        0.5 * (inside + outside)
    };
    Ok(IntervalEstimate {
        lower: bisect(r_hat, lo_out),
        upper: bisect(r_hat, hi_out),
        level,
        point: r_hat,
        method: Method::ProfileLlr,
        flags: IntervalFlags::default(),
    })
}
