//! Monte Carlo Neyman confidence belt construction and inversion.
//!
//! For each null rate on a parameter grid an acceptance set of observation
//! counts is built under one of three ordering principles; inverting the
//! belt at an observed count yields a confidence interval without relying
//! on asymptotics.

use crate::interval::{binom_llr, IntervalEstimate, IntervalFlags, Method};
use crate::rng::substream;
use crate::special::{chi2_quantile_1, ln_binomial};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use thiserror::Error;

/// Acceptance-set ordering principle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeltOrdering {
    /// Exact Monte Carlo quantiles of the LLR test statistic.
    LlrExact,
    /// Chi-squared(1) threshold, identical across the parameter grid.
    LlrAsymptotic,
    /// Central binomial tail quantiles (Clopper-Pearson style).
    CentralPdf,
}

impl std::fmt::Display for BeltOrdering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BeltOrdering::LlrExact => "llr-exact",
            BeltOrdering::LlrAsymptotic => "llr-asymptotic",
            BeltOrdering::CentralPdf => "central-pdf",
        })
    }
}

/// Parameters for [`build_neyman_belt`].
#[derive(Debug, Clone)]
pub struct BeltConfig {
    pub n: u64,
    pub level: f64,
    pub ordering: BeltOrdering,
    /// Number of null-rate grid points (uniform over `range`).
    pub grid_size: usize,
    /// Parameter range; defaults to the full unit interval.
    pub range: (f64, f64),
    /// Monte Carlo sample size per grid point (LlrExact only).
    pub mc_samples: u64,
    pub seed: u64,
}

impl BeltConfig {
    pub fn new(n: u64, level: f64, ordering: BeltOrdering) -> Self {
        Self {
            n,
            level,
            ordering,
            grid_size: 2000,
            range: (0.0, 1.0),
            mc_samples: 100_000,
            seed: 0,
        }
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = (lo, hi);
        self
    }

    pub fn with_grid_size(mut self, grid_size: usize) -> Self {
        self.grid_size = grid_size;
        self
    }

    pub fn with_mc_samples(mut self, mc_samples: u64) -> Self {
        self.mc_samples = mc_samples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A constructed confidence belt: per grid value, the accepted counts.
#[derive(Debug, Clone)]
pub struct ConfidenceBelt {
    pub n: u64,
    pub level: f64,
    pub param_grid: Vec<f64>,
    /// Acceptance sets stored exactly as produced (sorted, no forced
    /// contiguity).
    pub acceptance_sets: Vec<Vec<u64>>,
    pub ordering: BeltOrdering,
    pub mc_samples: u64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum BeltError {
    #[error("grid_size {0} below minimum 100")]
    GridTooSmall(usize),
    #[error("mc_samples {0} below minimum 10000 for llr-exact ordering")]
    TooFewSamples(u64),
    #[error("confidence level must be in (0,1), got {0}")]
    BadLevel(f64),
    #[error("parameter range [{0}, {1}] is not an ordered subset of [0,1]")]
    BadRange(f64, f64),
    #[error("observed count {k} exceeds belt trials n={n}")]
    CountOutOfRange { k: u64, n: u64 },
    #[error("belt acceptance sets never contain k={0}; belt inconsistent with observation")]
    EmptyInversion(u64),
}

/// Builds the belt by scanning the parameter grid.
///
/// Grid points are evaluated in parallel; each derives an independent RNG
/// substream from (seed, grid index) so the result is schedule independent.
pub fn build_neyman_belt(cfg: &BeltConfig) -> Result<ConfidenceBelt, BeltError> {
    if cfg.grid_size < 100 {
        return Err(BeltError::GridTooSmall(cfg.grid_size));
    }
    if cfg.ordering == BeltOrdering::LlrExact && cfg.mc_samples < 10_000 {
        return Err(BeltError::TooFewSamples(cfg.mc_samples));
    }
    if cfg.level <= 0.0 || cfg.level >= 1.0 {
        return Err(BeltError::BadLevel(cfg.level));
    }
    let (lo, hi) = cfg.range;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(BeltError::BadRange(lo, hi));
    }

    let n = cfg.n;
    let ln_binom: Vec<f64> = (0..=n).map(|k| ln_binomial(n, k)).collect();
    let param_grid: Vec<f64> = (0..cfg.grid_size)
        .map(|i| lo + (hi - lo) * i as f64 / (cfg.grid_size - 1) as f64)
        .collect();

    let acceptance_sets: Vec<Vec<u64>> = param_grid
        .par_iter()
        .enumerate()
        .map(|(idx, &theta0)| acceptance_set(cfg, &ln_binom, theta0, idx as u64))
        .collect();

    Ok(ConfidenceBelt {
        n,
        level: cfg.level,
        param_grid,
        acceptance_sets,
        ordering: cfg.ordering,
        mc_samples: cfg.mc_samples,
        seed: cfg.seed,
    })
}

fn pmf_table(ln_binom: &[f64], n: u64, theta0: f64) -> Vec<f64> {
    if theta0 <= 0.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[0] = 1.0;
        return v;
    }
    if theta0 >= 1.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[n as usize] = 1.0;
        return v;
    }
    let (lp, lq) = (theta0.ln(), (1.0 - theta0).ln());
    (0..=n)
        .map(|k| (ln_binom[k as usize] + k as f64 * lp + (n - k) as f64 * lq).exp())
        .collect()
}

fn acceptance_set(cfg: &BeltConfig, ln_binom: &[f64], theta0: f64, grid_idx: u64) -> Vec<u64> {
    let n = cfg.n;
    match cfg.ordering {
        BeltOrdering::LlrAsymptotic => {
            let t_cut = chi2_quantile_1(cfg.level);
            (0..=n)
                .filter(|&k| binom_llr(k, n, theta0) <= t_cut)
                .collect()
        }
        BeltOrdering::CentralPdf => {
            let alpha = 1.0 - cfg.level;
            let pmf = pmf_table(ln_binom, n, theta0);
            // Largest k_lo with P(X < k_lo) <= alpha/2.
            let mut below = 0.0;
            let mut k_lo = 0u64;
            for k in 0..=n {
                if below + pmf[k as usize] <= alpha / 2.0 && k < n {
                    below += pmf[k as usize];
                    k_lo = k + 1;
                } else {
                    break;
                }
            }
            // Smallest k_hi with P(X > k_hi) <= alpha/2.
            let mut above = 0.0;
            let mut k_hi = n;
            for k in (0..=n).rev() {
                if above + pmf[k as usize] <= alpha / 2.0 && k > 0 {
                    above += pmf[k as usize];
                    k_hi = k - 1;
                } else {
                    break;
                }
            }
            (k_lo..=k_hi).collect()
        }
        BeltOrdering::LlrExact => {
            let pmf = pmf_table(ln_binom, n, theta0);
            let hist = multinomial_histogram(&pmf, cfg.mc_samples, cfg.seed, grid_idx);
            let t: Vec<f64> = (0..=n).map(|k| binom_llr(k, n, theta0)).collect();

            // Empirical CDF quantile of the MC test statistic with the
            // `t <= t_cut` convention; identical-t lattice ties are kept
            // together.
            let mut order: Vec<u64> = (0..=n).collect();
            order.sort_by(|&a, &b| t[a as usize].total_cmp(&t[b as usize]));
            let needed = (cfg.level * cfg.mc_samples as f64).ceil() as u64;
            let mut cum = 0u64;
            let mut t_cut = f64::INFINITY;
            let mut i = 0usize;
            while i < order.len() {
                // group ties sharing the same statistic value
                let t_here = t[order[i] as usize];
                let mut j = i;
                while j < order.len() && t[order[j] as usize] == t_here {
                    cum += hist[order[j] as usize];
                    j += 1;
                }
                if cum >= needed {
                    t_cut = t_here;
                    break;
                }
                i = j;
            }
            (0..=n).filter(|&k| t[k as usize] <= t_cut).collect()
        }
    }
}

/// Draws the histogram of `samples` iid Binom(theta0, n) values via
/// sequential conditional binomials (equal in law to iid draws).
fn multinomial_histogram(pmf: &[f64], samples: u64, seed: u64, grid_idx: u64) -> Vec<u64> {
    let mut rng = substream(seed, grid_idx);
    let mut hist = vec![0u64; pmf.len()];
    let mut remaining = samples;
    let mut rem_p = 1.0_f64;
    for (k, &p) in pmf.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k == pmf.len() - 1 || rem_p <= p {
            hist[k] += remaining;
            remaining = 0;
            break;
        }
        let cond = (p / rem_p).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, cond)
            .expect("conditional binomial probability in [0,1]")
            .sample(&mut rng);
        hist[k] = draw;
        remaining -= draw;
        rem_p -= p;
    }
    if remaining > 0 {
        let last = hist.len() - 1;
        hist[last] += remaining;
    }
    hist
}

/// Intersects the belt at an observed count, taking the union of all grid
/// rates whose acceptance set contains it.
///
/// The union is reported as [min, max]; a non-contiguous union sets
/// `flags.non_contiguous`.
pub fn invert_belt(belt: &ConfidenceBelt, k: u64) -> Result<IntervalEstimate, BeltError> {
    if k > belt.n {
        return Err(BeltError::CountOutOfRange { k, n: belt.n });
    }
    let mut covered: Vec<usize> = Vec::new();
    for (i, set) in belt.acceptance_sets.iter().enumerate() {
        if set.binary_search(&k).is_ok() {
            covered.push(i);
        }
    }
    let (first, last) = match (covered.first(), covered.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(BeltError::EmptyInversion(k)),
    };
    let non_contiguous = covered.len() != last - first + 1;
    Ok(IntervalEstimate {
        lower: belt.param_grid[first],
        upper: belt.param_grid[last],
        level: belt.level,
        point: k as f64 / belt.n as f64,
        method: Method::BeltInversion,
        flags: IntervalFlags {
            non_contiguous,
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::{clopper_pearson_interval, CountPair};
    use crate::special::binom_pmf;

    #[test]
    fn rejects_undersized_configs() {
        let cfg = BeltConfig::new(10, 0.95, BeltOrdering::CentralPdf).with_grid_size(50);
        assert!(matches!(
            build_neyman_belt(&cfg),
            Err(BeltError::GridTooSmall(50))
        ));
        let cfg = BeltConfig::new(10, 0.95, BeltOrdering::LlrExact).with_mc_samples(100);
        assert!(matches!(
            build_neyman_belt(&cfg),
            Err(BeltError::TooFewSamples(100))
        ));
    }

    #[test]
    fn acceptance_at_zero_rate_is_point_mass() {
        for ordering in [
            BeltOrdering::LlrExact,
            BeltOrdering::LlrAsymptotic,
            BeltOrdering::CentralPdf,
        ] {
            let cfg = BeltConfig::new(20, 0.95, ordering)
                .with_grid_size(101)
                .with_mc_samples(10_000);
            let belt = build_neyman_belt(&cfg).unwrap();
            assert_eq!(belt.acceptance_sets[0], vec![0], "{ordering}");
        }
    }

    #[test]
    fn asymptotic_threshold_is_global() {
        // The chi-squared cut does not vary with theta0: the acceptance
        // set is exactly {k : LLR(k) <= quantile} everywhere.
        let cfg = BeltConfig::new(50, 0.95, BeltOrdering::LlrAsymptotic).with_grid_size(100);
        let belt = build_neyman_belt(&cfg).unwrap();
        let cut = chi2_quantile_1(0.95);
        for (i, &theta0) in belt.param_grid.iter().enumerate() {
            let expect: Vec<u64> = (0..=50).filter(|&k| binom_llr(k, 50, theta0) <= cut).collect();
            assert_eq!(belt.acceptance_sets[i], expect);
        }
    }

    #[test]
    fn central_pdf_inversion_matches_clopper_pearson() {
        let cfg = BeltConfig::new(20, 0.95, BeltOrdering::CentralPdf).with_grid_size(2001);
        let belt = build_neyman_belt(&cfg).unwrap();
        let step = 1.0 / 2000.0;
        for k in 0..=20_u64 {
            let iv = invert_belt(&belt, k).unwrap();
            let cp = clopper_pearson_interval(CountPair::new(k, 20).unwrap(), 0.95).unwrap();
            assert!(
                (iv.lower - cp.lower).abs() <= step + 1e-12,
                "k={k}: {} vs {}",
                iv.lower,
                cp.lower
            );
            assert!(
                (iv.upper - cp.upper).abs() <= step + 1e-12,
                "k={k}: {} vs {}",
                iv.upper,
                cp.upper
            );
        }
    }

    #[test]
    fn exact_belt_coverage_at_each_grid_point() {
        let cfg = BeltConfig::new(30, 0.9, BeltOrdering::LlrExact)
            .with_grid_size(100)
            .with_mc_samples(20_000)
            .with_seed(7);
        let belt = build_neyman_belt(&cfg).unwrap();
        for (i, &theta0) in belt.param_grid.iter().enumerate() {
            let p_accept: f64 = belt.acceptance_sets[i]
                .iter()
                .map(|&k| binom_pmf(k, 30, theta0))
                .sum();
            // Exact empirical quantiles guarantee >= level on the MC
            // sample; allow a small MC slack on the true probability.
            assert!(p_accept >= 0.9 - 0.02, "theta0={theta0}: {p_accept}");
        }
    }

    #[test]
    fn belts_are_bit_identical_across_runs() {
        let cfg = BeltConfig::new(25, 0.95, BeltOrdering::LlrExact)
            .with_grid_size(120)
            .with_mc_samples(10_000)
            .with_seed(3);
        let a = build_neyman_belt(&cfg).unwrap();
        let b = build_neyman_belt(&cfg).unwrap();
        assert_eq!(a.acceptance_sets, b.acceptance_sets);
    }

    #[test]
    fn full_cover_inversion_spans_range() {
        // A belt over a tiny range where k=2 of n=4 is accepted everywhere.
        let cfg = BeltConfig::new(4, 0.95, BeltOrdering::CentralPdf)
            .with_grid_size(100)
            .with_range(0.45, 0.55);
        let belt = build_neyman_belt(&cfg).unwrap();
        let iv = invert_belt(&belt, 2).unwrap();
        assert_eq!(iv.lower, 0.45);
        assert_eq!(iv.upper, 0.55);
        assert!(!iv.flags.non_contiguous);
    }

    #[test]
    fn inversion_errors() {
        let cfg = BeltConfig::new(10, 0.95, BeltOrdering::CentralPdf)
            .with_grid_size(100)
            .with_range(0.0, 0.2);
        let belt = build_neyman_belt(&cfg).unwrap();
        assert!(matches!(
            invert_belt(&belt, 11),
            Err(BeltError::CountOutOfRange { .. })
        ));
        // k=10 of n=10 is never accepted for theta0 <= 0.2
        assert!(matches!(
            invert_belt(&belt, 10),
            Err(BeltError::EmptyInversion(10))
        ));
    }
}
