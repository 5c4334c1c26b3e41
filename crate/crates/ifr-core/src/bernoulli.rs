//! Correlated 3-dimensional Bernoulli population simulation over the
//! tested/infected/fatal (TIF) phase space.
//!
//! The test coin factorizes from the correlated (infected, fatal) pair;
//! the pair is sampled in the multinomial corner basis, with the
//! no-fatality-without-infection boundary enforced.

use crate::rng::substream;
use crate::testerr::TestCharacteristics;
use rand_distr::{Binomial, Distribution, Hypergeometric};
use rayon::prelude::*;
use thiserror::Error;

/// Corner probabilities of a correlated Bernoulli pair (X, Y) together
/// with its moment parametrization.
///
/// Corners map as [(0,0), (0,1), (1,0), (1,1)] -> [p0, p1, p2, p3].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bernoulli2DParams {
    pub e_x: f64,
    pub e_y: f64,
    pub rho: f64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("expectations must lie strictly inside (0,1)")]
    BadMoments,
    #[error(
        "correlation {rho} outside the admissible range [{lo:.6}, {hi:.6}] for these moments"
    )]
    InadmissibleRho { rho: f64, lo: f64, hi: f64 },
    #[error("boundary violated: P(X=0, Y=1) = {0:.3e} must vanish; use the maximum coupling")]
    BoundaryViolated(f64),
    #[error("population and test sample must satisfy 1 <= n_t <= n_p")]
    BadSampleSizes,
    #[error("need at least one Monte Carlo run")]
    ZeroRuns,
    #[error("category matrix rows must sum to the population size")]
    InconsistentMatrix,
}

/// Admissible correlation range keeping all four corners inside the
/// unit interval.
pub fn admissible_rho_range(e_x: f64, e_y: f64) -> Result<(f64, f64), SimError> {
    check_moments(e_x, e_y)?;
    let s = (e_x * (1.0 - e_x) * e_y * (1.0 - e_y)).sqrt();
    let p3_max = e_x.min(e_y);
    let p3_min = (e_x + e_y - 1.0).max(0.0);
    Ok(((p3_min - e_x * e_y) / s, (p3_max - e_x * e_y) / s))
}

/// Largest admissible positive correlation for the given moments.
pub fn max_coupling(e_x: f64, e_y: f64) -> Result<f64, SimError> {
    admissible_rho_range(e_x, e_y).map(|(_, hi)| hi)
}

fn check_moments(e_x: f64, e_y: f64) -> Result<(), SimError> {
    if !(0.0 < e_x && e_x < 1.0 && 0.0 < e_y && e_y < 1.0) {
        return Err(SimError::BadMoments);
    }
    Ok(())
}

/// Corner probabilities from the moment parametrization
/// p3 = rho sqrt(e_x e_y (e_x - 1)(e_y - 1)) + e_x e_y, p2 = e_x - p3,
/// p1 = e_y - p3, p0 = 1 - (p1 + p2 + p3).
pub fn corners_from_moments(e_x: f64, e_y: f64, rho: f64) -> Result<Bernoulli2DParams, SimError> {
    let (lo, hi) = admissible_rho_range(e_x, e_y)?;
    let s = (e_x * e_y * (e_x - 1.0) * (e_y - 1.0)).sqrt();
    let p3 = rho * s + e_x * e_y;
    let p2 = e_x - p3;
    let p1 = e_y - p3;
    let p0 = 1.0 - (p1 + p2 + p3);
    let eps = 1e-12;
    for p in [p0, p1, p2, p3] {
        if !(-eps..=1.0 + eps).contains(&p) {
            return Err(SimError::InadmissibleRho { rho, lo, hi });
        }
    }
    // Clamp floating point residue at the admissibility boundary.
    let clamp = |p: f64| p.clamp(0.0, 1.0);
    Ok(Bernoulli2DParams {
        e_x,
        e_y,
        rho,
        p0: clamp(p0),
        p1: clamp(p1),
        p2: clamp(p2),
        p3: clamp(p3),
    })
}

/// Configuration of the TIF population simulation.
#[derive(Debug, Clone, Copy)]
pub struct PopulationSimConfig {
    /// Population size (people per run).
    pub n_p: u64,
    /// Test sample size when the test count is held fixed.
    pub n_t: u64,
    /// Expectation of the test coin (used when fluctuating the count).
    pub mean_t: f64,
    /// Expectation of the infection coin.
    pub mean_i: f64,
    /// Expectation of the fatality coin.
    pub mean_f: f64,
    /// Correlation of (infection, fatality); must realize the boundary
    /// P(I=0, F=1) = 0, i.e. the maximum coupling.
    pub rho_if: f64,
    pub n_mc: u64,
    pub seed: u64,
    /// Draw the test sample size binomially instead of fixing n_t.
    pub fluctuate_test_count: bool,
}

impl PopulationSimConfig {
    /// Validates and resolves the corner probabilities.
    pub fn corners(&self) -> Result<Bernoulli2DParams, SimError> {
        if self.n_p == 0 || self.n_t == 0 || self.n_t > self.n_p {
            return Err(SimError::BadSampleSizes);
        }
        if self.n_mc == 0 {
            return Err(SimError::ZeroRuns);
        }
        let mut corners = corners_from_moments(self.mean_i, self.mean_f, self.rho_if)?;
        // No fatalities without infection; tolerate only rounding residue.
        if corners.p1 > 1e-9 {
            return Err(SimError::BoundaryViolated(corners.p1));
        }
        corners.p0 += corners.p1;
        corners.p1 = 0.0;
        Ok(corners)
    }

    /// The field-study setup: maximum coupling between the infection
    /// and fatality coins, test count fluctuating binomially.
    ///
    /// Fluctuating the count widens the tested categories' quantile
    /// spreads by roughly 2.5x compared to a fixed sample; set
    /// `fluctuate_test_count = false` to hold the sample at `n_t`.
    pub fn gangelt(n_mc: u64, seed: u64) -> Self {
        let mean_i = 138.0 / 919.0;
        let mean_f = 7.0 / 12597.0;
        Self {
            n_p: 12597,
            n_t: 919,
            mean_t: 919.0 / 12597.0,
            mean_i,
            mean_f,
            rho_if: max_coupling(mean_i, mean_f).expect("valid moments"),
            n_mc,
            seed,
            fluctuate_test_count: true,
        }
    }
}

/// One run's counts for the eight TIF categories; index = 4 T + 2 I + F.
pub type CategoryCounts = [u64; 8];

/// Simulation output: the category-count matrix (the sufficient
/// statistic) plus the derived summaries.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub matrix: Vec<CategoryCounts>,
    pub stats: CategoryStats,
}

/// Summary statistics over the Monte Carlo runs.
#[derive(Debug, Clone)]
pub struct CategoryStats {
    pub means: [f64; 8],
    pub q68: [(u64, u64); 8],
    pub q95: [(u64, u64); 8],
    /// Full-population infection fatality ratio per run.
    pub ifr_full: Vec<f64>,
    /// Test-sample extrapolated estimate per run.
    pub ifr_extrapolated: Vec<f64>,
    /// Runs without any infections (excluded from `ifr_full`).
    pub excluded_no_infection: u64,
    /// Runs without positives in the test sample (excluded from
    /// `ifr_extrapolated`).
    pub excluded_no_test_positive: u64,
}

/// Runs the population simulation.
///
/// Runs are independent with substreams keyed by (seed, run index), so
/// the aggregate is identical regardless of parallel schedule.
pub fn run_population_sim(cfg: &PopulationSimConfig) -> Result<SimResult, SimError> {
    let corners = cfg.corners()?;
    let matrix: Vec<CategoryCounts> = (0..cfg.n_mc)
        .into_par_iter()
        .map(|run| simulate_one(cfg, &corners, run))
        .collect();
    let stats = stats_from_matrix(&matrix, cfg.n_p, cfg.n_t)?;
    Ok(SimResult { matrix, stats })
}

fn simulate_one(cfg: &PopulationSimConfig, c: &Bernoulli2DParams, run: u64) -> CategoryCounts {
    let mut rng = substream(cfg.seed, run);
    let n_p = cfg.n_p;

    // Multinomial draw over the (I, F) corners via sequential binomials.
    let mut counts = [0u64; 4]; // order: p3, p2, p1, p0
    let probs = [c.p3, c.p2, c.p1];
    let mut remaining = n_p;
    let mut rem_p = 1.0;
    for (slot, &p) in probs.iter().enumerate() {
        if remaining == 0 || rem_p <= 0.0 {
            break;
        }
        let cond = (p / rem_p).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, cond)
            .expect("valid conditional probability")
            .sample(&mut rng);
        counts[slot] = draw;
        remaining -= draw;
        rem_p -= p;
    }
    counts[3] = remaining;
    let (c_if, c_i, c_f, c_none) = (counts[0], counts[1], counts[2], counts[3]);

    // Split each (I, F) class into tested / untested.
    let tested: [u64; 4] = if cfg.fluctuate_test_count {
        let mut t = [0u64; 4];
        for (i, &class) in [c_if, c_i, c_f, c_none].iter().enumerate() {
            if class > 0 {
                t[i] = Binomial::new(class, cfg.mean_t)
                    .expect("valid test probability")
                    .sample(&mut rng);
            }
        }
        t
    } else {
        // Uniform sample without replacement: multivariate hypergeometric
        // via sequential draws.
        let mut t = [0u64; 4];
        let mut pool = n_p;
        let mut draws = cfg.n_t;
        for (i, &class) in [c_if, c_i, c_f, c_none].iter().enumerate() {
            if draws == 0 {
                break;
            }
            if i == 3 {
                t[i] = draws;
                break;
            }
            if class == 0 {
                continue;
            }
            let got = Hypergeometric::new(pool, class, draws)
                .expect("valid hypergeometric")
                .sample(&mut rng);
            t[i] = got;
            draws -= got;
            pool -= class;
        }
        t
    };

    let (t_if, t_i, t_f, t_none) = (tested[0], tested[1], tested[2], tested[3]);
    let mut cat = [0u64; 8];
    cat[0b111] = t_if;
    cat[0b110] = t_i;
    cat[0b101] = t_f;
    cat[0b100] = t_none;
    cat[0b011] = c_if - t_if;
    cat[0b010] = c_i - t_i;
    cat[0b001] = c_f - t_f;
    cat[0b000] = c_none - t_none;
    cat
}

/// Derives all reported statistics from the category matrix alone.
pub fn stats_from_matrix(
    matrix: &[CategoryCounts],
    n_p: u64,
    _n_t: u64,
) -> Result<CategoryStats, SimError> {
    let n_mc = matrix.len();
    let mut means = [0.0_f64; 8];
    let mut ifr_full = Vec::with_capacity(n_mc);
    let mut ifr_extrapolated = Vec::with_capacity(n_mc);
    let mut excluded_no_infection = 0u64;
    let mut excluded_no_test_positive = 0u64;

    for row in matrix {
        if row.iter().sum::<u64>() != n_p {
            return Err(SimError::InconsistentMatrix);
        }
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v as f64;
        }
        let fatal = row[0b011] + row[0b111] + row[0b001] + row[0b101];
        let infected = row[0b010] + row[0b011] + row[0b110] + row[0b111];
        if infected == 0 {
            excluded_no_infection += 1;
        } else {
            ifr_full.push(fatal as f64 / infected as f64);
        }
        let tested: u64 = row[0b100] + row[0b101] + row[0b110] + row[0b111];
        let test_pos = row[0b110] + row[0b111];
        if test_pos == 0 || tested == 0 {
            excluded_no_test_positive += 1;
        } else {
            let rate_f = fatal as f64 / n_p as f64;
            let rate_i = test_pos as f64 / tested as f64;
            ifr_extrapolated.push(rate_f / rate_i);
        }
    }
    for m in &mut means {
        *m /= n_mc as f64;
    }

    let mut q68 = [(0u64, 0u64); 8];
    let mut q95 = [(0u64, 0u64); 8];
    let mut scratch: Vec<u64> = Vec::with_capacity(n_mc);
    for cat in 0..8 {
        scratch.clear();
        scratch.extend(matrix.iter().map(|row| row[cat]));
        scratch.sort_unstable();
        q68[cat] = central_interval(&scratch, 0.6827);
        q95[cat] = central_interval(&scratch, 0.95);
    }

    Ok(CategoryStats {
        means,
        q68,
        q95,
        ifr_full,
        ifr_extrapolated,
        excluded_no_infection,
        excluded_no_test_positive,
    })
}

/// Nearest-rank central quantile interval over a sorted sample.
fn central_interval(sorted: &[u64], level: f64) -> (u64, u64) {
    let tail = 0.5 * (1.0 - level);
    (nearest_rank(sorted, tail), nearest_rank(sorted, 1.0 - tail))
}

fn nearest_rank(sorted: &[u64], q: f64) -> u64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Post-processing hook: applies diagnostic test errors per tested
/// person, returning the observed positive count for each run.
///
/// True positives survive with the sensitivity, non-infected tested
/// people false-positive at one minus the specificity.
pub fn apply_test_errors(
    matrix: &[CategoryCounts],
    tc: &TestCharacteristics,
    seed: u64,
) -> Vec<u64> {
    matrix
        .par_iter()
        .enumerate()
        .map(|(run, row)| {
            let mut rng = substream(seed, run as u64);
            let infected_tested = row[0b110] + row[0b111];
            let clean_tested = row[0b100] + row[0b101];
            let mut observed = 0;
            if infected_tested > 0 {
                observed += Binomial::new(infected_tested, tc.sensitivity)
                    .expect("valid sensitivity")
                    .sample(&mut rng);
            }
            if clean_tested > 0 && tc.specificity < 1.0 {
                observed += Binomial::new(clean_tested, 1.0 - tc.specificity)
                    .expect("valid specificity")
                    .sample(&mut rng);
            }
            observed
        })
        .collect()
}
