//! Coverage probability simulation for the single-binomial interval
//! estimators, by exact enumeration or Monte Carlo.

use crate::CliError;
use ifr_core::interval::{
    clopper_pearson_interval, llr_interval_asymptotic, midp_interval, wald_interval,
    wilson_interval, CountPair, IntervalEstimate,
};
use ifr_core::rng::substream;
use ifr_core::special::binom_pmf;
use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;

/// Estimators covered by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageEstimator {
    Wald,
    Wilson,
    ClopperPearson,
    MidP,
    Llr,
}

impl std::str::FromStr for CoverageEstimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wald" => Ok(Self::Wald),
            "wilson" => Ok(Self::Wilson),
            "clopper-pearson" | "cp" => Ok(Self::ClopperPearson),
            "mid-p" | "midp" => Ok(Self::MidP),
            "llr" => Ok(Self::Llr),
            other => Err(format!(
                "unknown estimator {other}; expected wald|wilson|clopper-pearson|mid-p|llr"
            )),
        }
    }
}

impl CoverageEstimator {
    pub fn interval(self, c: CountPair, level: f64) -> Result<IntervalEstimate, CliError> {
        Ok(match self {
            Self::Wald => wald_interval(c, level)?,
            Self::Wilson => wilson_interval(c, level)?,
            Self::ClopperPearson => clopper_pearson_interval(c, level)?,
            Self::MidP => midp_interval(c, level)?,
            Self::Llr => llr_interval_asymptotic(c, level)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageMode {
    /// Exact enumeration over all k with binomial weights (no MC noise).
    Exact,
    /// Monte Carlo sampling of k.
    Mc,
}

impl std::str::FromStr for CoverageMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Self::Exact),
            "mc" => Ok(Self::Mc),
            other => Err(format!("unknown mode {other}; expected exact|mc")),
        }
    }
}

/// Per-rate coverage probabilities and mean interval widths.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub estimator: CoverageEstimator,
    pub n: u64,
    pub level: f64,
    pub p_grid: Vec<f64>,
    pub coverage: Vec<f64>,
    pub mean_width: Vec<f64>,
}

/// Runs the coverage simulation.
///
/// Exact mode computes sum_k Binom(k; n, p) 1[p in CI(k, n)] with no
/// randomness; MC mode draws `mc_samples` observations per grid rate.
pub fn coverage_simulation(
    estimator: CoverageEstimator,
    n: u64,
    p_grid: &[f64],
    level: f64,
    mode: CoverageMode,
    mc_samples: u64,
    seed: u64,
) -> Result<CoverageReport, CliError> {
    // All intervals (and widths) are functions of k only.
    let intervals: Vec<IntervalEstimate> = (0..=n)
        .into_par_iter()
        .map(|k| estimator.interval(CountPair::new(k, n).expect("k <= n"), level))
        .collect::<Result<_, _>>()?;

    let per_p = |(&idx, &p): (&usize, &f64)| -> (f64, f64) {
        match mode {
            CoverageMode::Exact => {
                let mut cover = 0.0;
                let mut width = 0.0;
                for (k, iv) in intervals.iter().enumerate() {
                    let w = binom_pmf(k as u64, n, p);
                    if w == 0.0 {
                        continue;
                    }
                    if iv.contains(p) {
                        cover += w;
                    }
                    width += w * iv.width();
                }
                (cover, width)
            }
            CoverageMode::Mc => {
                let mut rng = substream(seed, idx as u64);
                let mut cover = 0u64;
                let mut width = 0.0;
                for _ in 0..mc_samples {
                    let mut k = 0u64;
                    // direct Bernoulli sum is wasteful; binomial sampling
                    // via the distribution crate
                    if p > 0.0 && p < 1.0 {
                        k = rand_sample_binomial(&mut rng, n, p);
                    } else if p >= 1.0 {
                        k = n;
                    }
                    let iv = &intervals[k as usize];
                    if iv.contains(p) {
                        cover += 1;
                    }
                    width += iv.width();
                }
                (
                    cover as f64 / mc_samples as f64,
                    width / mc_samples as f64,
                )
            }
        }
    };

    let results: Vec<(f64, f64)> = p_grid
        .iter()
        .enumerate()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(i, p)| per_p((i, p)))
        .collect();

    Ok(CoverageReport {
        estimator,
        n,
        level,
        p_grid: p_grid.to_vec(),
        coverage: results.iter().map(|r| r.0).collect(),
        mean_width: results.iter().map(|r| r.1).collect(),
    })
}

fn rand_sample_binomial(rng: &mut impl Rng, n: u64, p: f64) -> u64 {
    use rand_distr::Distribution;
    rand_distr::Binomial::new(n, p)
        .expect("valid binomial")
        .sample(rng)
}

impl CoverageReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,coverage,mean_width\n");
        for i in 0..self.p_grid.len() {
            out.push_str(&format!(
                "{:.6},{:.8},{:.8}\n",
                self.p_grid[i], self.coverage[i], self.mean_width[i]
            ));
        }
        out
    }
}

/// The default 0.001-step interior rate grid.
pub fn default_p_grid() -> Vec<f64> {
    (1..1000).map(|i| i as f64 / 1000.0).collect()
}
