//! Multi-study combination: random-effects meta-analysis (method of
//! moments and normal likelihood), Wasserstein barycenter, arithmetic
//! mean and normalized product of posteriors, and the joint profile
//! log-likelihood ratio.

use crate::density::{DensityError, GridDensity};
use crate::interval::{IntervalEstimate, IntervalFlags, Method};
use crate::ratio::{profile_llr_interval, profile_llr_statistic, RatioCounts, RatioError};
use crate::special::{chi2_quantile_1, z_for_level};
use thiserror::Error;

/// One study's point estimate with its standard error and combination
/// weight.
#[derive(Debug, Clone, Copy)]
pub struct StudyEstimate {
    pub r: f64,
    pub se: f64,
    pub weight: f64,
}

impl StudyEstimate {
    pub fn new(r: f64, se: f64) -> Result<Self, FusionError> {
        if !(se > 0.0) || !se.is_finite() || !r.is_finite() {
            return Err(FusionError::BadEstimate { r, se });
        }
        Ok(Self { r, se, weight: 1.0 })
    }
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("study estimate invalid (r={r}, se={se})")]
    BadEstimate { r: f64, se: f64 },
    #[error("need at least {0} studies")]
    TooFewStudies(usize),
    #[error("normal likelihood fit did not converge")]
    NoConvergence,
    #[error("degenerate (point mass) input density at index {0}")]
    DegenerateInput(usize),
    #[error(
        "product underflows: supports barely overlap; most incompatible pair ({0}, {1})"
    )]
    ProductUnderflow(usize, usize),
    #[error("weights must be non-negative with a positive sum")]
    BadWeights,
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Ratio(#[from] RatioError),
}

/// Result of a random-effects combination.
#[derive(Debug, Clone)]
pub struct RandomEffectsFit {
    pub r_hat: f64,
    /// Between-study heterogeneity variance, floored at zero.
    pub delta_sq: f64,
    /// Standard error of the combined mean, (sum of weights)^-1/2.
    pub se_r: f64,
    /// Converged inverse-variance weights.
    pub weights: Vec<f64>,
    /// Inputs kept for likelihood-surface evaluation.
    estimates: Vec<StudyEstimate>,
    /// Nonzero heterogeneity was truncated to zero.
    pub truncated: bool,
    pub iterations: usize,
}

impl RandomEffectsFit {
    /// Joint log-likelihood of (r, delta^2) under the normal-normal
    /// marginal model.
    pub fn log_lik(&self, r: f64, delta_sq: f64) -> f64 {
        normal_log_lik(&self.estimates, r, delta_sq)
    }

    /// Gaussian interval r_hat +- z se, as quoted for the parametric
    /// combiners.
    pub fn gaussian_interval(&self, level: f64, method: Method) -> IntervalEstimate {
        let z = z_for_level(level);
        IntervalEstimate {
            lower: self.r_hat - z * self.se_r,
            upper: self.r_hat + z * self.se_r,
            level,
            point: self.r_hat,
            method,
            flags: IntervalFlags::default(),
        }
    }

    /// Profile confidence interval for r by the likelihood ratio against
    /// chi-squared(1), maximizing over the heterogeneity at each r.
    pub fn profile_interval_r(&self, level: f64) -> IntervalEstimate {
        let threshold = chi2_quantile_1(level);
        let best = self.log_lik(self.r_hat, self.delta_sq);
        let stat = |r: f64| {
            let d2 = profile_delta_sq(&self.estimates, r);
            -2.0 * (normal_log_lik(&self.estimates, r, d2) - best)
        };
        let span = 10.0 * self.se_r.max(1e-12);
        let lower = bisect_boundary(&stat, self.r_hat, self.r_hat - span, threshold);
        let upper = bisect_boundary(&stat, self.r_hat, self.r_hat + span, threshold);
        IntervalEstimate {
            lower,
            upper,
            level,
            point: self.r_hat,
            method: Method::NlGaussian,
            flags: IntervalFlags::default(),
        }
    }

    /// Profile confidence interval for the heterogeneity variance, with
    /// the combined mean profiled out at each candidate value; the lower
    /// endpoint sticks at zero when the floor is inside the region.
    pub fn profile_interval_delta_sq(&self, level: f64) -> IntervalEstimate {
        let threshold = chi2_quantile_1(level);
        let best = self.log_lik(self.r_hat, self.delta_sq);
        let stat = |d2: f64| {
            let weights: Vec<f64> = self
                .estimates
                .iter()
                .map(|e| 1.0 / (e.se * e.se + d2))
                .collect();
            let w_sum: f64 = weights.iter().sum();
            let r = self
                .estimates
                .iter()
                .zip(&weights)
                .map(|(e, w)| w * e.r)
                .sum::<f64>()
                / w_sum;
            -2.0 * (normal_log_lik(&self.estimates, r, d2) - best)
        };
        let span = (self.delta_sq + self.se_r * self.se_r).max(1e-12) * 10.0;
        let lower = if self.delta_sq == 0.0 || stat(0.0) <= threshold {
            0.0
        } else {
            bisect_boundary(&stat, self.delta_sq, 0.0, threshold)
        };
        let upper = bisect_boundary(&stat, self.delta_sq, self.delta_sq + span, threshold);
        IntervalEstimate {
            lower,
            upper,
            level,
            point: self.delta_sq,
            method: Method::NlGaussian,
            flags: IntervalFlags::default(),
        }
    }
}

fn check_estimates(estimates: &[StudyEstimate], min: usize) -> Result<(), FusionError> {
    if estimates.len() < min {
        return Err(FusionError::TooFewStudies(min));
    }
    for e in estimates {
        if !(e.se > 0.0) || !e.r.is_finite() {
            return Err(FusionError::BadEstimate { r: e.r, se: e.se });
        }
    }
    Ok(())
}

/// DerSimonian-Laird method of moments with the two-step iterated
/// weighting, run to a fixed point of the heterogeneity.
///
/// A single study passes through with zero heterogeneity.
pub fn mom_combine(estimates: &[StudyEstimate]) -> Result<RandomEffectsFit, FusionError> {
    check_estimates(estimates, 1)?;
    if estimates.len() == 1 {
        let e = estimates[0];
        return Ok(RandomEffectsFit {
            r_hat: e.r,
            delta_sq: 0.0,
            se_r: e.se,
            weights: vec![1.0 / (e.se * e.se)],
            estimates: estimates.to_vec(),
            truncated: false,
            iterations: 0,
        });
    }
    let mut delta_sq = 0.0_f64;
    let mut truncated;
    let mut iterations = 0;
    let (mut r_hat, mut weights);
    loop {
        weights = estimates
            .iter()
            .map(|e| 1.0 / (e.se * e.se + delta_sq))
            .collect::<Vec<f64>>();
        let w_sum: f64 = weights.iter().sum();
        r_hat = estimates
            .iter()
            .zip(&weights)
            .map(|(e, w)| w * e.r)
            .sum::<f64>()
            / w_sum;
        let q: f64 = estimates
            .iter()
            .zip(&weights)
            .map(|(e, w)| w * (e.r - r_hat) * (e.r - r_hat))
            .sum();
        let w2_sum: f64 = weights.iter().map(|w| w * w).sum();
        let w_s2: f64 = estimates
            .iter()
            .zip(&weights)
            .map(|(e, w)| w * e.se * e.se)
            .sum();
        let w2_s2: f64 = estimates
            .iter()
            .zip(&weights)
            .map(|(e, w)| w * w * e.se * e.se)
            .sum();
        let raw = (q - w_s2 + w2_s2 / w_sum) / (w_sum - w2_sum / w_sum);
        let next = raw.max(0.0);
        truncated = raw < 0.0;
        iterations += 1;
        if (next - delta_sq).abs() < 1e-12 || iterations >= 10_000 {
            delta_sq = next;
            break;
        }
        delta_sq = next;
    }
    // Final pass with the converged heterogeneity.
    let weights: Vec<f64> = estimates
        .iter()
        .map(|e| 1.0 / (e.se * e.se + delta_sq))
        .collect();
    let w_sum: f64 = weights.iter().sum();
    let r_hat = estimates
        .iter()
        .zip(&weights)
        .map(|(e, w)| w * e.r)
        .sum::<f64>()
        / w_sum;
    Ok(RandomEffectsFit {
        r_hat,
        delta_sq,
        se_r: w_sum.powf(-0.5),
        weights,
        estimates: estimates.to_vec(),
        truncated,
        iterations,
    })
}

fn normal_log_lik(estimates: &[StudyEstimate], r: f64, delta_sq: f64) -> f64 {
    estimates
        .iter()
        .map(|e| {
            let var = e.se * e.se + delta_sq;
            -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (e.r - r) * (e.r - r) / (2.0 * var)
        })
        .sum()
}

/// Heterogeneity maximizing the likelihood at fixed r (1-D fixed point,
/// floored at zero).
fn profile_delta_sq(estimates: &[StudyEstimate], r: f64) -> f64 {
    let mut d2 = 0.0_f64;
    for _ in 0..10_000 {
        let num: f64 = estimates
            .iter()
            .map(|e| {
                let v = e.se * e.se + d2;
                ((e.r - r) * (e.r - r) - e.se * e.se) / (v * v)
            })
            .sum();
        let den: f64 = estimates
            .iter()
            .map(|e| {
                let v = e.se * e.se + d2;
                1.0 / (v * v)
            })
            .sum();
        let next = (num / den).max(0.0);
        if (next - d2).abs() < 1e-14 {
            return next;
        }
        d2 = next;
    }
    d2
}

/// Normal-likelihood random-effects fit by fixed-point iteration of the
/// maximum likelihood equations, with a direct scan fallback.
pub fn nl_fit(estimates: &[StudyEstimate]) -> Result<RandomEffectsFit, FusionError> {
    check_estimates(estimates, 2)?;
    let mut r_hat = estimates.iter().map(|e| e.r).sum::<f64>() / estimates.len() as f64;
    let mut delta_sq = 0.0_f64;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..10_000 {
        iterations = it + 1;
        let weights: Vec<f64> = estimates
            .iter()
            .map(|e| 1.0 / (e.se * e.se + delta_sq))
            .collect();
        let w_sum: f64 = weights.iter().sum();
        let next_r = estimates
            .iter()
            .zip(&weights)
            .map(|(e, w)| w * e.r)
            .sum::<f64>()
            / w_sum;
        let num: f64 = estimates
            .iter()
            .zip(&weights)
            .map(|(e, w)| w * w * ((e.r - next_r) * (e.r - next_r) - e.se * e.se))
            .sum();
        let den: f64 = weights.iter().map(|w| w * w).sum();
        let next_d2 = (num / den).max(0.0);
        let done = (next_r - r_hat).abs() < 1e-14 && (next_d2 - delta_sq).abs() < 1e-14;
        r_hat = next_r;
        delta_sq = next_d2;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        // Direct optimization fallback: scan the heterogeneity with the
        // closed-form conditional mean.
        let (mut best_ll, mut best) = (f64::NEG_INFINITY, (r_hat, delta_sq));
        let s_max = estimates.iter().map(|e| e.se).fold(0.0_f64, f64::max);
        let spread = estimates
            .iter()
            .map(|e| (e.r - r_hat) * (e.r - r_hat))
            .sum::<f64>()
            / estimates.len() as f64;
        let d2_hi = (4.0 * (spread + s_max * s_max)).max(1e-30);
        for i in 0..=4000 {
            let d2 = d2_hi * i as f64 / 4000.0;
            let weights: Vec<f64> = estimates
                .iter()
                .map(|e| 1.0 / (e.se * e.se + d2))
                .collect();
            let w_sum: f64 = weights.iter().sum();
            let r = estimates
                .iter()
                .zip(&weights)
                .map(|(e, w)| w * e.r)
                .sum::<f64>()
                / w_sum;
            let ll = normal_log_lik(estimates, r, d2);
            if ll > best_ll {
                best_ll = ll;
                best = (r, d2);
            }
        }
        if !best_ll.is_finite() {
            return Err(FusionError::NoConvergence);
        }
        r_hat = best.0;
        delta_sq = best.1;
    }
    let weights: Vec<f64> = estimates
        .iter()
        .map(|e| 1.0 / (e.se * e.se + delta_sq))
        .collect();
    let w_sum: f64 = weights.iter().sum();
    Ok(RandomEffectsFit {
        r_hat,
        delta_sq,
        se_r: w_sum.powf(-0.5),
        weights,
        estimates: estimates.to_vec(),
        truncated: delta_sq == 0.0,
        iterations,
    })
}

fn bisect_boundary(stat: &dyn Fn(f64) -> f64, inside: f64, outside_start: f64, threshold: f64) -> f64 {
    let mut outside = outside_start;
    let mut step = outside - inside;
    while stat(outside) < threshold {
        step *= 2.0;
        outside = inside + step;
        if step.abs() > 1e6 {
            return outside;
        }
    }
    let (mut a, mut b) = (inside, outside);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if stat(mid) < threshold {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// A fused density with its method tag and the weights actually used.
#[derive(Debug, Clone)]
pub struct FusedDensity {
    pub density: GridDensity,
    pub method: FusionMethod,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMethod {
    Barycenter,
    MeanOfPosteriors,
    ProductOfPosteriors,
}

impl std::fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMethod::Barycenter => "ot",
            FusionMethod::MeanOfPosteriors => "sum",
            FusionMethod::ProductOfPosteriors => "prod",
        })
    }
}

fn normalize_weights(weights: &[f64], k: usize) -> Result<Vec<f64>, FusionError> {
    if weights.is_empty() {
        return Ok(vec![1.0 / k as f64; k]);
    }
    if weights.len() != k || weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(FusionError::BadWeights);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(FusionError::BadWeights);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

const QUANTILE_GRID: usize = 4096;

/// Wasserstein-Frechet barycenter of 1-D densities: weighted average of
/// the inverse CDFs on a uniform quantile grid, differentiated back to
/// a density.
///
/// Empty `weights` means uniform. A (numerically) point-mass input is
/// rejected.
pub fn ot_barycenter(
    densities: &[&GridDensity],
    weights: &[f64],
) -> Result<FusedDensity, FusionError> {
    if densities.is_empty() {
        return Err(FusionError::TooFewStudies(1));
    }
    let w = normalize_weights(weights, densities.len())?;

    // Inverse CDFs on the shared quantile grid.
    let qs: Vec<f64> = (0..QUANTILE_GRID)
        .map(|i| (i as f64 + 0.5) / QUANTILE_GRID as f64)
        .collect();
    let mut avg = vec![0.0_f64; QUANTILE_GRID];
    for (idx, d) in densities.iter().enumerate() {
        let cdf = d.cdf();
        let q_lo = crate::density::quantile_from_cdf(&d.grid, &cdf, 0.005);
        let q_hi = crate::density::quantile_from_cdf(&d.grid, &cdf, 0.995);
        // A density whose central 99% sits within a few grid cells is a
        // point mass at this resolution.
        let cells = d.grid.partition_point(|&g| g < q_hi) - d.grid.partition_point(|&g| g < q_lo);
        if cells < 4 {
            return Err(FusionError::DegenerateInput(idx));
        }
        for (a, &q) in avg.iter_mut().zip(&qs) {
            *a += w[idx] * crate::density::quantile_from_cdf(&d.grid, &cdf, q);
        }
    }

    // The averaged quantile function is non-decreasing; merge flats to
    // build a strictly increasing support grid.
    let mut grid = Vec::with_capacity(QUANTILE_GRID);
    let mut q_marks = Vec::with_capacity(QUANTILE_GRID);
    for (i, &x) in avg.iter().enumerate() {
        if grid.last().is_none_or(|&g| x > g + 1e-15) {
            grid.push(x);
            q_marks.push(qs[i]);
        } else {
            *q_marks.last_mut().unwrap() = qs[i];
        }
    }
    if grid.len() < 4 {
        return Err(FusionError::DegenerateInput(0));
    }
    // density = dq/dx by central differences on (grid, q).
    let n = grid.len();
    let mut mass = Vec::with_capacity(n);
    for i in 0..n {
        let (i0, i1) = (i.saturating_sub(1), (i + 1).min(n - 1));
        mass.push(((q_marks[i1] - q_marks[i0]) / (grid[i1] - grid[i0])).max(0.0));
    }
    let density = GridDensity::normalized(grid, mass)?;
    Ok(FusedDensity {
        density,
        method: FusionMethod::Barycenter,
        weights: w,
    })
}

/// Common evaluation grid covering all inputs.
fn common_grid(densities: &[&GridDensity]) -> Vec<f64> {
    let lo = densities
        .iter()
        .map(|d| d.grid[0])
        .fold(f64::INFINITY, f64::min);
    let hi = densities
        .iter()
        .map(|d| *d.grid.last().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    if lo > 0.0 && hi / lo > 50.0 {
        crate::density::log_grid(lo, hi, QUANTILE_GRID)
    } else {
        crate::density::linear_grid(lo, hi, QUANTILE_GRID)
    }
}

/// Pointwise weighted arithmetic mean of densities (mixture), preserving
/// multimodality.
pub fn mean_of_posteriors(
    densities: &[&GridDensity],
    weights: &[f64],
) -> Result<FusedDensity, FusionError> {
    if densities.is_empty() {
        return Err(FusionError::TooFewStudies(1));
    }
    let w = normalize_weights(weights, densities.len())?;
    let same_grid = densities
        .windows(2)
        .all(|pair| pair[0].grid == pair[1].grid);
    let grid: Vec<f64> = if same_grid {
        densities[0].grid.clone()
    } else {
        common_grid(densities)
    };
    let mass: Vec<f64> = grid
        .iter()
        .map(|&x| {
            densities
                .iter()
                .zip(&w)
                .map(|(d, wi)| wi * d.density_at(x))
                .sum()
        })
        .collect();
    let density = GridDensity::normalized(grid, mass)?;
    Ok(FusedDensity {
        density,
        method: FusionMethod::MeanOfPosteriors,
        weights: w,
    })
}

/// Normalized weighted geometric product of densities (product of
/// experts / logarithmic pooling).
///
/// `weights` here are exponents; empty means unit exponents. Underflow
/// of the normalization constant reports the least-overlapping pair.
pub fn product_of_posteriors(
    densities: &[&GridDensity],
    weights: &[f64],
) -> Result<FusedDensity, FusionError> {
    if densities.is_empty() {
        return Err(FusionError::TooFewStudies(1));
    }
    let w: Vec<f64> = if weights.is_empty() {
        vec![1.0; densities.len()]
    } else {
        if weights.len() != densities.len() || weights.iter().any(|&x| !(x >= 0.0)) {
            return Err(FusionError::BadWeights);
        }
        weights.to_vec()
    };
    let grid = common_grid(densities);
    let mut ln_mass: Vec<f64> = vec![0.0; grid.len()];
    for (d, &wi) in densities.iter().zip(&w) {
        for (lm, &x) in ln_mass.iter_mut().zip(&grid) {
            let v = d.density_at(x);
            *lm += if v > 0.0 { wi * v.ln() } else { f64::NEG_INFINITY };
        }
    }
    let shift = ln_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        let (i, j) = most_incompatible_pair(densities);
        return Err(FusionError::ProductUnderflow(i, j));
    }
    let mass: Vec<f64> = ln_mass.iter().map(|lm| (lm - shift).exp()).collect();
    let density = GridDensity::normalized(grid, mass)?;
    Ok(FusedDensity {
        density,
        method: FusionMethod::ProductOfPosteriors,
        weights: w,
    })
}

fn most_incompatible_pair(densities: &[&GridDensity]) -> (usize, usize) {
    let mut worst = (0, densities.len().saturating_sub(1));
    let mut min_overlap = f64::INFINITY;
    for i in 0..densities.len() {
        for j in i + 1..densities.len() {
            let grid = common_grid(&[densities[i], densities[j]]);
            let mut overlap = 0.0;
            for win in grid.windows(2) {
                let a = densities[i].density_at(win[0]).min(densities[j].density_at(win[0]));
                let b = densities[i].density_at(win[1]).min(densities[j].density_at(win[1]));
                overlap += 0.5 * (a + b) * (win[1] - win[0]);
            }
            if overlap < min_overlap {
                min_overlap = overlap;
                worst = (i, j);
            }
        }
    }
    worst
}

/// Joint profile-LLR combination of independent count datasets.
#[derive(Debug, Clone)]
pub struct JointLlrFit {
    pub r_hat: f64,
    pub interval: IntervalEstimate,
    /// (r0, summed LLR) samples of the combined curve.
    pub curve: Vec<(f64, f64)>,
    /// Some single-dataset intervals are pairwise disjoint.
    pub compatibility_warning: bool,
}

/// Sums the per-dataset profile LLR curves and intersects with the
/// chi-squared(1) quantile.
pub fn joint_llr_combine(
    datasets: &[RatioCounts],
    level: f64,
) -> Result<JointLlrFit, FusionError> {
    if datasets.is_empty() {
        return Err(FusionError::TooFewStudies(1));
    }
    let total = |r0: f64| -> f64 {
        datasets
            .iter()
            .map(|c| profile_llr_statistic(*c, r0))
            .sum()
    };

    // Bracket the minimum between the extreme single-dataset MLEs.
    let r_mles: Vec<f64> = datasets.iter().map(|c| c.ratio()).collect();
    let lo = r_mles.iter().copied().fold(f64::INFINITY, f64::min) * 0.5;
    let hi = r_mles.iter().copied().fold(0.0_f64, f64::max) * 2.0;
    let (mut a, mut b) = (lo, hi);
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let c1 = b - phi * (b - a);
        let c2 = a + phi * (b - a);
        if total(c1) > total(c2) {
            a = c1;
        } else {
            b = c2;
        }
    }
    let r_hat = 0.5 * (a + b);
    let floor = total(r_hat);

    let threshold = chi2_quantile_1(level);
    let stat = |r0: f64| total(r0) - floor;
    let lower = bisect_boundary(&stat, r_hat, r_hat * 0.5, threshold);
    let upper = bisect_boundary(&stat, r_hat, r_hat * 2.0, threshold);

    // Sampled curve for plotting/inspection.
    let curve: Vec<(f64, f64)> = (0..400)
        .map(|i| {
            let r0 = lower * 0.5 + (upper * 1.5 - lower * 0.5) * i as f64 / 399.0;
            (r0, stat(r0))
        })
        .collect();

    // Pairwise compatibility of the single-dataset intervals.
    let mut singles = Vec::with_capacity(datasets.len());
    for c in datasets {
        singles.push(profile_llr_interval(*c, level)?);
    }
    let mut warning = false;
    for i in 0..singles.len() {
        for j in i + 1..singles.len() {
            if singles[i].upper < singles[j].lower || singles[j].upper < singles[i].lower {
                warning = true;
            }
        }
    }

    Ok(JointLlrFit {
        r_hat,
        interval: IntervalEstimate {
            lower,
            upper,
            level,
            point: r_hat,
            method: Method::JointLlr,
            flags: IntervalFlags::default(),
        },
        curve,
        compatibility_warning: warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{credible_interval, linear_grid, log_grid};

    fn gaussian_density(mu: f64, sigma: f64, lo: f64, hi: f64, n: usize) -> GridDensity {
        let grid = linear_grid(lo, hi, n);
        let mass: Vec<f64> = grid
            .iter()
            .map(|&x| (-0.5 * ((x - mu) / sigma).powi(2)).exp())
            .collect();
        GridDensity::normalized(grid, mass).unwrap()
    }

    #[test]
    fn mom_identical_inputs_have_zero_heterogeneity() {
        let estimates: Vec<StudyEstimate> = (0..5)
            .map(|_| StudyEstimate::new(0.004, 0.001).unwrap())
            .collect();
        let fit = mom_combine(&estimates).unwrap();
        assert!((fit.r_hat - 0.004).abs() < 1e-15);
        assert_eq!(fit.delta_sq, 0.0);
        // precision-weighted se: 0.001/sqrt(5)
        assert!((fit.se_r - 0.001 / 5.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mom_two_studies_hand_computed() {
        // First pass: w = 1/s^2 = 100 each, r = 0.4, Q = 100*(0.04 + 0.04)
        // = 8, delta^2 = (Q - sum w s^2 + sum w^2 s^2 / sum w)/(sum w -
        // sum w^2/sum w) = (8 - 2 + 1)/(200 - 100) = 0.07
        let estimates = vec![
            StudyEstimate::new(0.2, 0.1).unwrap(),
            StudyEstimate::new(0.6, 0.1).unwrap(),
        ];
        let fit = mom_combine(&estimates).unwrap();
        assert!((fit.r_hat - 0.4).abs() < 1e-12);
        // with equal variances, iteration keeps weights equal; the
        // first-pass heterogeneity is already the fixed point
        assert!((fit.delta_sq - 0.07).abs() < 1e-12, "{}", fit.delta_sq);
    }

    #[test]
    fn mom_single_study_passthrough() {
        let estimates = vec![StudyEstimate::new(0.3, 0.05).unwrap()];
        let fit = mom_combine(&estimates).unwrap();
        assert_eq!(fit.r_hat, 0.3);
        assert_eq!(fit.delta_sq, 0.0);
    }

    #[test]
    fn nl_identical_inputs() {
        let estimates: Vec<StudyEstimate> = (0..4)
            .map(|_| StudyEstimate::new(0.01, 0.002).unwrap())
            .collect();
        let fit = nl_fit(&estimates).unwrap();
        assert!((fit.r_hat - 0.01).abs() < 1e-12);
        assert_eq!(fit.delta_sq, 0.0);
    }

    #[test]
    fn nl_marginal_matches_quadrature_oracle() {
        // The closed-form marginal N(r, s^2 + d^2) likelihood equals the
        // numerically integrated hierarchy on a 3-study toy.
        let estimates = vec![
            StudyEstimate::new(0.2, 0.05).unwrap(),
            StudyEstimate::new(0.35, 0.08).unwrap(),
            StudyEstimate::new(0.27, 0.06).unwrap(),
        ];
        let (r, d2) = (0.28, 0.004);
        let closed = normal_log_lik(&estimates, r, d2);
        // integrate each study's latent theta numerically
        let mut numeric = 0.0;
        for e in &estimates {
            let sd_total = (e.se * e.se + d2).sqrt();
            let lo = r - 10.0 * sd_total;
            let hi = r + 10.0 * sd_total;
            let n = 20_000;
            let h = (hi - lo) / n as f64;
            let mut integral = 0.0;
            for i in 0..=n {
                let theta = lo + i as f64 * h;
                let f = (-0.5 * ((e.r - theta) / e.se).powi(2)).exp()
                    / (e.se * (2.0 * std::f64::consts::PI).sqrt())
                    * (-0.5 * ((theta - r) / d2.sqrt()).powi(2)).exp()
                        / (d2.sqrt() * (2.0 * std::f64::consts::PI).sqrt());
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                integral += w * f * h;
            }
            numeric += integral.ln();
        }
        assert!(
            (closed - numeric).abs() / closed.abs() < 1e-6,
            "{closed} vs {numeric}"
        );
    }

    #[test]
    fn nl_profile_intervals_cover_the_fit() {
        let estimates = vec![
            StudyEstimate::new(0.19, 0.07).unwrap(),
            StudyEstimate::new(0.53, 0.07).unwrap(),
            StudyEstimate::new(0.24, 0.02).unwrap(),
            StudyEstimate::new(1.04, 0.26).unwrap(),
        ];
        let fit = nl_fit(&estimates).unwrap();
        let r_iv = fit.profile_interval_r(0.95);
        assert!(r_iv.contains(fit.r_hat));
        assert!(r_iv.width() > 0.0);
        let d_iv = fit.profile_interval_delta_sq(0.95);
        assert!(d_iv.contains(fit.delta_sq));
        assert!(d_iv.lower >= 0.0);
        // the 2-D surface peaks at the fitted parameters
        let at_fit = fit.log_lik(fit.r_hat, fit.delta_sq);
        for (dr, dd) in [(0.01, 0.0), (-0.01, 0.0), (0.0, 0.001), (0.01, 0.001)] {
            assert!(fit.log_lik(fit.r_hat + dr, (fit.delta_sq + dd).max(0.0)) <= at_fit + 1e-9);
        }
    }

    #[test]
    fn mom_and_nl_agree_at_zero_heterogeneity_equal_errors() {
        let estimates = vec![
            StudyEstimate::new(0.30, 0.05).unwrap(),
            StudyEstimate::new(0.31, 0.05).unwrap(),
            StudyEstimate::new(0.305, 0.05).unwrap(),
        ];
        let mom = mom_combine(&estimates).unwrap();
        let nl = nl_fit(&estimates).unwrap();
        // tiny dispersion: both truncate heterogeneity to ~0 and reduce
        // to the precision-weighted mean
        assert!((mom.r_hat - nl.r_hat).abs() < 1e-9);
    }

    #[test]
    fn barycenter_idempotent_on_identical_inputs() {
        let d = gaussian_density(0.5, 0.1, 0.0, 1.0, 2001);
        let fused = ot_barycenter(&[&d, &d, &d], &[]).unwrap();
        let step = 2.0 * (d.grid[1] - d.grid[0]);
        let iv_in = credible_interval(&d, 0.95);
        let iv_out = credible_interval(&fused.density, 0.95);
        assert!((iv_in.lower - iv_out.lower).abs() < step);
        assert!((iv_in.upper - iv_out.upper).abs() < step);
        // sup norm of the density difference on the output support
        let sup = fused
            .density
            .grid
            .iter()
            .zip(&fused.density.mass)
            .map(|(&x, &m)| (m - d.density_at(x)).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup < 0.05 * d.peak(), "sup {sup}");
    }

    #[test]
    fn barycenter_of_equal_variance_gaussians() {
        let a = gaussian_density(0.3, 0.05, 0.0, 1.0, 4001);
        let b = gaussian_density(0.7, 0.05, 0.0, 1.0, 4001);
        let fused = ot_barycenter(&[&a, &b], &[0.5, 0.5]).unwrap();
        // closed form: N((mu1+mu2)/2, sigma^2)
        let expect = gaussian_density(0.5, 0.05, 0.0, 1.0, 4001);
        let iv = credible_interval(&fused.density, 0.95);
        let want = credible_interval(&expect, 0.95);
        assert!((iv.lower - want.lower).abs() < 2e-3, "{} vs {}", iv.lower, want.lower);
        assert!((iv.upper - want.upper).abs() < 2e-3);
        assert!((fused.density.mean() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn barycenter_rejects_point_mass() {
        let d = gaussian_density(0.5, 0.1, 0.0, 1.0, 2001);
        let grid = linear_grid(0.0, 1.0, 2001);
        let mut mass = vec![0.0; 2001];
        mass[1000] = 1.0;
        let spike = GridDensity::normalized(grid, mass).unwrap();
        assert!(matches!(
            ot_barycenter(&[&d, &spike], &[]),
            Err(FusionError::DegenerateInput(1))
        ));
    }

    #[test]
    fn mean_preserves_mass_and_multimodality() {
        let a = gaussian_density(0.2, 0.03, 0.0, 1.0, 4001);
        let b = gaussian_density(0.8, 0.03, 0.0, 1.0, 4001);
        let fused = mean_of_posteriors(&[&a, &b], &[0.25, 0.75]).unwrap();
        // same grid -> no resampling; weighted mixture integrates to 1
        // before renormalization
        let raw_integral: f64 = {
            let grid = &fused.density.grid;
            let m: Vec<f64> = grid
                .iter()
                .map(|&x| 0.25 * a.density_at(x) + 0.75 * b.density_at(x))
                .collect();
            (1..grid.len())
                .map(|i| 0.5 * (m[i] + m[i - 1]) * (grid[i] - grid[i - 1]))
                .sum()
        };
        assert!((raw_integral - 1.0).abs() < 1e-10);
        // mass splits by the weights
        let cdf = fused.density.cdf();
        let mid_idx = fused.density.grid.partition_point(|&x| x < 0.5);
        assert!((cdf[mid_idx] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn mean_of_identical_inputs_is_identity() {
        let d = gaussian_density(0.4, 0.07, 0.0, 1.0, 2001);
        let fused = mean_of_posteriors(&[&d, &d], &[]).unwrap();
        for (a, b) in fused.density.mass.iter().zip(&d.mass) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn product_of_gaussians_is_precision_weighted() {
        let a = gaussian_density(0.3, 0.06, 0.0, 1.0, 4001);
        let b = gaussian_density(0.5, 0.08, 0.0, 1.0, 4001);
        let fused = product_of_posteriors(&[&a, &b], &[]).unwrap();
        // closed form posterior: mean = (mu1/s1^2 + mu2/s2^2)/(1/s1^2 +
        // 1/s2^2), var = 1/(1/s1^2 + 1/s2^2)
        let (p1, p2) = (1.0 / (0.06_f64 * 0.06), 1.0 / (0.08_f64 * 0.08));
        let mu = (0.3 * p1 + 0.5 * p2) / (p1 + p2);
        let sigma = (1.0 / (p1 + p2)).sqrt();
        let expect = gaussian_density(mu, sigma, 0.0, 1.0, 4001);
        let sup = expect
            .grid
            .iter()
            .zip(&expect.mass)
            .map(|(&x, &m)| (m - fused.density.density_at(x)).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup < 0.01 * expect.peak(), "sup {sup}");
    }

    #[test]
    fn product_sharpens_identical_inputs() {
        let d = gaussian_density(0.4, 0.06, 0.0, 1.0, 4001);
        let fused = product_of_posteriors(&[&d, &d], &[]).unwrap();
        let w_in = credible_interval(&d, 0.95).width();
        let w_out = credible_interval(&fused.density, 0.95).width();
        assert!(w_out < w_in);
        assert!((fused.density.mode() - 0.4).abs() < 1e-3);
    }

    #[test]
    fn product_underflow_names_worst_pair() {
        let a = gaussian_density(0.05, 0.004, 0.0, 0.1, 2001);
        let b = gaussian_density(0.95, 0.004, 0.9, 1.0, 2001);
        match product_of_posteriors(&[&a, &b], &[]) {
            Err(FusionError::ProductUnderflow(0, 1)) => {}
            other => panic!("expected underflow, got {other:?}"),
        }
    }

    #[test]
    fn joint_llr_single_dataset_reduces_to_profile() {
        let c = RatioCounts::new(7, 12597, 138, 919).unwrap();
        let joint = joint_llr_combine(&[c], 0.95).unwrap();
        let single = profile_llr_interval(c, 0.95).unwrap();
        assert!((joint.r_hat - c.ratio()).abs() < 1e-6);
        assert!((joint.interval.lower - single.lower).abs() < 1e-6);
        assert!((joint.interval.upper - single.upper).abs() < 1e-6);
        assert!(!joint.compatibility_warning);
    }

    #[test]
    fn joint_llr_curve_nonnegative_at_member_mles() {
        let datasets = vec![
            RatioCounts::new(50, 10_000, 100, 1000).unwrap(),
            RatioCounts::new(30, 10_000, 80, 1000).unwrap(),
            RatioCounts::new(70, 10_000, 120, 1000).unwrap(),
        ];
        let joint = joint_llr_combine(&datasets, 0.95).unwrap();
        let total = |r0: f64| -> f64 {
            datasets.iter().map(|c| profile_llr_statistic(*c, r0)).sum()
        };
        let floor = total(joint.r_hat);
        for c in &datasets {
            assert!(total(c.ratio()) - floor > -1e-9);
        }
    }

    #[test]
    fn joint_llr_flags_incompatible_datasets() {
        let datasets = vec![
            RatioCounts::new(10, 100_000, 100, 1000).unwrap(),
            RatioCounts::new(900, 100_000, 100, 1000).unwrap(),
        ];
        let joint = joint_llr_combine(&datasets, 0.95).unwrap();
        assert!(joint.compatibility_warning);
    }

    #[test]
    fn log_grid_inputs_are_supported() {
        let grid = log_grid(1e-3, 1e-1, 2001);
        let mass: Vec<f64> = grid
            .iter()
            .map(|&x| (-0.5 * ((x.ln() + 4.0) / 0.3).powi(2)).exp() / x)
            .collect();
        let d = GridDensity::normalized(grid, mass).unwrap();
        let fused = ot_barycenter(&[&d, &d], &[]).unwrap();
        let a = credible_interval(&d, 0.95);
        let b = credible_interval(&fused.density, 0.95);
        assert!((a.lower - b.lower).abs() / a.lower < 0.01);
        assert!((a.upper - b.upper).abs() / a.upper < 0.01);
    }
}
