//! Beta-binomial posterior machinery: conjugate updates, the numeric
//! ratio posterior, and multiplicative nuisance-scale dressing.

use crate::density::{log_grid, DensityError, GridDensity};
use crate::ratio::RatioCounts;
use crate::special::{beta_quantile, gauss_legendre, normal_cdf};
use rayon::prelude::*;
use statrs::function::gamma::{gamma_lr, ln_gamma};
use thiserror::Error;

pub use crate::density::credible_interval;
pub use crate::interval::CountPair;

/// Beta distribution parameters, used for priors and posteriors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, BayesError> {
        if !(alpha > 0.0) || !(beta > 0.0) {
            return Err(BayesError::NonPositiveBeta { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    /// Unit flat prior Beta(1, 1).
    pub fn flat() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }

    /// Jeffreys prior Beta(1/2, 1/2).
    pub fn jeffreys() -> Self {
        Self { alpha: 0.5, beta: 0.5 }
    }

    /// Haldane improper prior Beta(0, 0); usable only as the limiting
    /// prior of a conjugate update with interior counts.
    pub fn haldane() -> Self {
        Self { alpha: 0.0, beta: 0.0 }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

#[derive(Debug, Error)]
pub enum BayesError {
    #[error("beta parameters must be positive (alpha={alpha}, beta={beta})")]
    NonPositiveBeta { alpha: f64, beta: f64 },
    #[error("scale prior sigma must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Conjugate beta-binomial update: Beta(alpha, beta) x Binom(k, n) ->
/// Beta(k + alpha, n - k + beta).
pub fn beta_posterior(c: CountPair, prior: BetaParams) -> BetaParams {
    BetaParams {
        alpha: c.k as f64 + prior.alpha,
        beta: (c.n - c.k) as f64 + prior.beta,
    }
}

/// Prior family for the multiplicative scale nuisances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleFamily {
    Normal,
    /// Gamma with (shape, rate) moment matched to (mu, sigma).
    Gamma,
}

/// Multiplicative scale correction prior with mean `mu` and width `sigma`;
/// `sigma = 0` degenerates to a point mass at `mu`.
#[derive(Debug, Clone, Copy)]
pub struct ScalePrior {
    pub mu: f64,
    pub sigma: f64,
    pub family: ScaleFamily,
}

impl ScalePrior {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self, BayesError> {
        if sigma < 0.0 {
            return Err(BayesError::NegativeSigma(sigma));
        }
        Ok(Self { mu, sigma, family: ScaleFamily::Normal })
    }

    pub fn gamma(mu: f64, sigma: f64) -> Result<Self, BayesError> {
        if sigma < 0.0 {
            return Err(BayesError::NegativeSigma(sigma));
        }
        Ok(Self { mu, sigma, family: ScaleFamily::Gamma })
    }

    /// Point mass at 1 (no correction).
    pub fn unit() -> Self {
        Self { mu: 1.0, sigma: 0.0, family: ScaleFamily::Normal }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self.family {
            ScaleFamily::Normal => {
                let z = (x - self.mu) / self.sigma;
                (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            ScaleFamily::Gamma => {
                let shape = (self.mu / self.sigma).powi(2);
                let rate = self.mu / (self.sigma * self.sigma);
                if x <= 0.0 {
                    return 0.0;
                }
                (shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)).exp()
            }
        }
    }

    /// Prior mass lost to the truncation at epsilon.
    fn truncated_mass(&self, eps: f64) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        match self.family {
            ScaleFamily::Normal => normal_cdf((eps - self.mu) / self.sigma),
            ScaleFamily::Gamma => {
                let shape = (self.mu / self.sigma).powi(2);
                let rate = self.mu / (self.sigma * self.sigma);
                gamma_lr(shape, rate * eps)
            }
        }
    }

    /// Gauss-Legendre nodes over [max(eps, mu - 6 sigma), mu + 6 sigma]
    /// weighted by the prior density; a point mass yields one unit node.
    fn quadrature(&self, eps: f64, n_nodes: usize) -> Vec<(f64, f64)> {
        if self.sigma == 0.0 {
            return vec![(self.mu, 1.0)];
        }
        let lo = (self.mu - 6.0 * self.sigma).max(eps);
        let hi = self.mu + 6.0 * self.sigma;
        let (x, w) = gauss_legendre(n_nodes);
        let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        x.iter()
            .zip(&w)
            .map(|(&xi, &wi)| {
                let t = mid + half * xi;
                (t, wi * half * self.pdf(t))
            })
            .collect()
    }
}

/// Truncation constant for the scale integrals.
pub const SCALE_EPS: f64 = 1e-6;
const SCALE_NODES: usize = 64;
const Y_NODES: usize = 256;

/// Grid specification for the ratio posterior support.
#[derive(Debug, Clone, Copy)]
pub struct RatioGridSpec {
    pub points: usize,
    /// Explicit support bounds; auto-detected from posterior quantiles
    /// when absent.
    pub bounds: Option<(f64, f64)>,
}

impl Default for RatioGridSpec {
    fn default() -> Self {
        Self { points: 4096, bounds: None }
    }
}

/// Diagnostics emitted alongside a dressed posterior.
#[derive(Debug, Clone, Default)]
pub struct DressingDiagnostics {
    pub truncated_gamma_mass: f64,
    pub truncated_lambda_mass: f64,
    pub warnings: Vec<String>,
}

/// A beta mixture with precomputed log normalizations, representing a
/// scale-dressed posterior factor.
struct BetaMixture {
    // (weight, a, b, ln_norm)
    comps: Vec<(f64, f64, f64, f64)>,
}

impl BetaMixture {
    /// Components Beta(scale*k + alpha, n - scale*k + beta) over the
    /// quadrature nodes of the scale prior. Nodes pushing the parameters
    /// out of the valid range are dropped.
    fn new(k: u64, n: u64, prior: BetaParams, scale: &ScalePrior) -> Self {
        let mut comps = Vec::new();
        for (s, w) in scale.quadrature(SCALE_EPS, SCALE_NODES) {
            let a = s * k as f64 + prior.alpha;
            let b = n as f64 - s * k as f64 + prior.beta;
            if a <= 0.0 || b <= 0.0 || w <= 0.0 {
                continue;
            }
            let ln_norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
            comps.push((w, a, b, ln_norm));
        }
        Self { comps }
    }

    fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        let (lx, l1x) = (x.ln(), (1.0 - x).ln_1p_from(x));
        let mut total = 0.0;
        for &(w, a, b, ln_norm) in &self.comps {
            total += w * (ln_norm + (a - 1.0) * lx + (b - 1.0) * l1x).exp();
        }
        total
    }

    /// Support range covering all components to quantile depth `tail`.
    fn support(&self, tail: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for &(_, a, b, _) in &self.comps {
            lo = lo.min(beta_quantile(tail, a, b));
            hi = hi.max(beta_quantile(1.0 - tail, a, b));
        }
        (lo, hi.min(1.0))
    }

    fn min_alpha(&self) -> f64 {
        self.comps
            .iter()
            .map(|&(_, a, _, _)| a)
            .fold(f64::INFINITY, f64::min)
    }
}

// Small helper: accurate ln(1-x) given x.
trait Ln1p {
    fn ln_1p_from(self, x: f64) -> f64;
}

impl Ln1p for f64 {
    #[inline]
    fn ln_1p_from(self, x: f64) -> f64 {
        // self is (1-x); use ln_1p on -x for small x
        if x < 0.5 {
            (-x).ln_1p()
        } else {
            self.ln()
        }
    }
}

/// Posterior density of the ratio r = p1/p2 from two independent
/// beta-binomial posteriors, by numeric integration of the change of
/// variables p1 = r y, p2 = y (Jacobian |y|).
pub fn ratio_posterior(
    c: RatioCounts,
    prior1: BetaParams,
    prior2: BetaParams,
    grid_spec: RatioGridSpec,
) -> Result<GridDensity, BayesError> {
    let (density, _) = dressed_ratio_posterior(
        c,
        prior1,
        prior2,
        ScalePrior::unit(),
        ScalePrior::unit(),
        grid_spec,
    )?;
    Ok(density)
}

/// Ratio posterior with multiplicative scale corrections gamma (on k1)
/// and lambda (on k2) integrated over their priors, truncated at
/// [`SCALE_EPS`].
pub fn dressed_ratio_posterior(
    c: RatioCounts,
    prior1: BetaParams,
    prior2: BetaParams,
    gamma: ScalePrior,
    lambda: ScalePrior,
    grid_spec: RatioGridSpec,
) -> Result<(GridDensity, DressingDiagnostics), BayesError> {
    let mut diag = DressingDiagnostics {
        truncated_gamma_mass: gamma.truncated_mass(SCALE_EPS),
        truncated_lambda_mass: lambda.truncated_mass(SCALE_EPS),
        ..Default::default()
    };
    if diag.truncated_gamma_mass > 0.01 {
        diag.warnings.push(format!(
            "gamma prior truncation at {SCALE_EPS:.0e} drops {:.2}% of mass",
            100.0 * diag.truncated_gamma_mass
        ));
    }
    if diag.truncated_lambda_mass > 0.01 {
        diag.warnings.push(format!(
            "lambda prior truncation at {SCALE_EPS:.0e} drops {:.2}% of mass",
            100.0 * diag.truncated_lambda_mass
        ));
    }

    let f1 = BetaMixture::new(c.k1, c.n1, prior1, &gamma);
    let f2 = BetaMixture::new(c.k2, c.n2, prior2, &lambda);

    // y-integration nodes over the full support of the denominator factor.
    let (y_lo, y_hi) = f2.support(1e-13);
    let (gx, gw) = gauss_legendre(Y_NODES);
    let (mid, half) = (0.5 * (y_hi + y_lo), 0.5 * (y_hi - y_lo));
    let y_nodes: Vec<(f64, f64)> = gx
        .iter()
        .zip(&gw)
        .map(|(&xi, &wi)| {
            let y = mid + half * xi;
            (y, wi * half * y * f2.eval(y))
        })
        .collect();

    // Support bounds for r; auto bounds widen until the tails are
    // contained.
    let (auto, mut lo, mut hi) = match grid_spec.bounds {
        Some((lo, hi)) => (false, lo, hi),
        None => {
            let (x_lo, x_hi) = f1.support(1e-11);
            let r_lo = (x_lo / y_hi).max(1e-300);
            let r_hi = x_hi / y_lo.max(1e-300);
            // Cap the dynamic range so grid resolution stays useful.
            let center = (x_lo.max(1e-300) * x_hi).sqrt() / (y_lo.max(1e-300) * y_hi).sqrt();
            (true, r_lo.max(center * 1e-7), r_hi.min(center * 1e7))
        }
    };

    let attempts = if auto { 4 } else { 1 };
    for attempt in 0..attempts {
        let grid = log_grid(lo, hi, grid_spec.points);
        let mass: Vec<f64> = grid
            .par_iter()
            .map(|&r| {
                let mut total = 0.0;
                for &(y, wy) in &y_nodes {
                    let x = r * y;
                    if x >= 1.0 {
                        continue;
                    }
                    total += wy * f1.eval(x);
                }
                total
            })
            .collect();

        let density = GridDensity::normalized(grid, mass)?;

        // Tail containment: the upper edge must carry negligible density;
        // the lower edge too unless the density diverges at 0 (numerator
        // shape parameter below 1, e.g. zero counts under Jeffreys).
        let peak = density.peak();
        let upper_ok = density.mass[density.mass.len() - 1] <= 1e-8 * peak;
        let lower_ok = f1.min_alpha() < 1.0 || density.mass[0] <= 1e-8 * peak;
        if upper_ok && lower_ok {
            return Ok((density, diag));
        }
        if attempt + 1 == attempts {
            break;
        }
        if !lower_ok {
            lo *= 0.1;
        }
        if !upper_ok {
            hi *= 10.0;
        }
    }
    Err(BayesError::Density(DensityError::GridTooNarrow {
        lo: lo * 0.1,
        hi: hi * 10.0,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::credible_interval;
    use crate::rng::substream;
    use rand_distr::Distribution;

    fn assert_pct(x: f64, expected_pct: f64) {
        assert!(
            (x * 100.0 - expected_pct).abs() <= 0.01,
            "got {:.4}%, expected {expected_pct}%",
            x * 100.0
        );
    }

    const GANGELT: RatioCounts = RatioCounts { k1: 7, n1: 12597, k2: 138, n2: 919 };

    #[test]
    fn conjugate_updates_match_closed_forms() {
        let flat = beta_posterior(CountPair::new(0, 10).unwrap(), BetaParams::flat());
        assert_eq!(flat, BetaParams { alpha: 1.0, beta: 11.0 });
        assert!((flat.mean() - 1.0 / 12.0).abs() < 1e-15);

        let jeff = beta_posterior(CountPair::new(0, 10).unwrap(), BetaParams::jeffreys());
        assert!((jeff.mean() - 0.5 / 11.0).abs() < 1e-15);

        let haldane = beta_posterior(CountPair::new(5, 10).unwrap(), BetaParams::haldane());
        assert!((haldane.mean() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn conjugacy_closure_under_data_splitting() {
        let prior = BetaParams::jeffreys();
        let pooled = beta_posterior(CountPair::new(9, 30).unwrap(), prior);
        let first = beta_posterior(CountPair::new(4, 12).unwrap(), prior);
        let split = BetaParams {
            alpha: first.alpha + 5.0,
            beta: first.beta + 13.0,
        };
        assert_eq!(pooled, split);
    }

    #[test]
    fn gangelt_jeffreys_cr95_and_cr68() {
        let d = ratio_posterior(
            GANGELT,
            BetaParams::jeffreys(),
            BetaParams::jeffreys(),
            RatioGridSpec::default(),
        )
        .unwrap();
        let cr95 = credible_interval(&d, 0.95);
        assert_pct(cr95.lower, 0.16);
        assert_pct(cr95.upper, 0.74);
        let cr68 = credible_interval(&d, 0.6827);
        assert_pct(cr68.lower, 0.25);
        assert_pct(cr68.upper, 0.54);
    }

    #[test]
    fn flat_prior_mode_matches_ml_estimate() {
        let d = ratio_posterior(
            GANGELT,
            BetaParams::flat(),
            BetaParams::flat(),
            RatioGridSpec::default(),
        )
        .unwrap();
        // The exact mode of the flat ratio density is 0.36594e-2
        // (independent quadrature); it prints as 0.37% like the ML rate.
        let step_pct = (d.grid[1] / d.grid[0] - 1.0) * GANGELT.ratio() * 100.0;
        assert!((d.mode() * 100.0 - 0.36594).abs() <= step_pct + 1e-4);
        // prints as 0.37% at table precision
        assert_eq!((d.mode() * 10_000.0).round() / 100.0, 0.37);
    }

    #[test]
    fn symmetric_counts_have_unit_median() {
        let c = RatioCounts::new(20, 100, 20, 100).unwrap();
        let d = ratio_posterior(
            c,
            BetaParams::jeffreys(),
            BetaParams::jeffreys(),
            RatioGridSpec::default(),
        )
        .unwrap();
        let median = d.quantile(0.5);
        assert!((median - 1.0).abs() < 2e-3, "median {median}");
    }

    #[test]
    fn grid_convergence_on_cr95() {
        let coarse = ratio_posterior(
            GANGELT,
            BetaParams::jeffreys(),
            BetaParams::jeffreys(),
            RatioGridSpec { points: 4096, bounds: None },
        )
        .unwrap();
        let fine = ratio_posterior(
            GANGELT,
            BetaParams::jeffreys(),
            BetaParams::jeffreys(),
            RatioGridSpec { points: 8192, bounds: None },
        )
        .unwrap();
        let a = credible_interval(&coarse, 0.95);
        let b = credible_interval(&fine, 0.95);
        assert!((a.lower - b.lower).abs() < 1e-4);
        assert!((a.upper - b.upper).abs() < 1e-4);
    }

    #[test]
    fn monte_carlo_cross_check_small_counts() {
        // Independent oracle: sample the joint posterior and histogram
        // the ratio; compare densities in sup-norm.
        let c = RatioCounts::new(2, 50, 5, 40).unwrap();
        let d = ratio_posterior(
            c,
            BetaParams::flat(),
            BetaParams::flat(),
            RatioGridSpec::default(),
        )
        .unwrap();

        let b1 = rand_distr::Beta::new(3.0, 49.0).unwrap();
        let b2 = rand_distr::Beta::new(6.0, 36.0).unwrap();
        let mut rng = substream(2024, 0);
        let n_samples = 4_000_000;
        let (h_lo, h_hi) = (0.0, 2.0);
        let bins = 160;
        let mut hist = vec![0u64; bins];
        let mut inside = 0u64;
        for _ in 0..n_samples {
            let p1: f64 = b1.sample(&mut rng);
            let p2: f64 = b2.sample(&mut rng);
            let r = p1 / p2;
            if r >= h_lo && r < h_hi {
                let idx = ((r - h_lo) / (h_hi - h_lo) * bins as f64) as usize;
                hist[idx] += 1;
                inside += 1;
            }
        }
        let coverage = inside as f64 / n_samples as f64;
        assert!(coverage > 0.99);
        let bin_w = (h_hi - h_lo) / bins as f64;
        let peak = d.peak();
        for (i, &count) in hist.iter().enumerate() {
            let mid = h_lo + (i as f64 + 0.5) * bin_w;
            let mc_density = count as f64 / (n_samples as f64 * bin_w);
            let err = (mc_density - d.density_at(mid)).abs();
            assert!(err < 0.02 * peak, "bin {i} at r={mid}: err {err} peak {peak}");
        }
    }

    #[test]
    fn dressing_with_point_masses_is_identity() {
        let spec = RatioGridSpec::default();
        let plain = ratio_posterior(GANGELT, BetaParams::jeffreys(), BetaParams::jeffreys(), spec)
            .unwrap();
        let (dressed, diag) = dressed_ratio_posterior(
            GANGELT,
            BetaParams::jeffreys(),
            BetaParams::jeffreys(),
            ScalePrior::unit(),
            ScalePrior::unit(),
            spec,
        )
        .unwrap();
        assert!(diag.warnings.is_empty());
        let max_diff = plain
            .mass
            .iter()
            .zip(&dressed.mass)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-9, "max density diff {max_diff}");
    }

    #[test]
    fn lambda_dressing_widens_the_interval() {
        let spec = RatioGridSpec::default();
        let plain = ratio_posterior(GANGELT, BetaParams::jeffreys(), BetaParams::jeffreys(), spec)
            .unwrap();
        let (dressed, _) = dressed_ratio_posterior(
            GANGELT,
            BetaParams::jeffreys(),
            BetaParams::jeffreys(),
            ScalePrior::unit(),
            ScalePrior::normal(1.0, 0.2).unwrap(),
            spec,
        )
        .unwrap();
        let w_plain = credible_interval(&plain, 0.95).width();
        let w_dressed = credible_interval(&dressed, 0.95).width();
        assert!(w_dressed > w_plain);
    }

    #[test]
    fn heavy_truncation_emits_warning() {
        let (_, diag) = dressed_ratio_posterior(
            GANGELT,
            BetaParams::jeffreys(),
            BetaParams::jeffreys(),
            ScalePrior::unit(),
            ScalePrior::normal(1.0, 0.43).unwrap(),
            RatioGridSpec::default(),
        )
        .unwrap();
        assert!(!diag.warnings.is_empty());
    }

    #[test]
    fn explicit_narrow_grid_is_rejected() {
        let err = ratio_posterior(
            GANGELT,
            BetaParams::jeffreys(),
            BetaParams::jeffreys(),
            RatioGridSpec { points: 512, bounds: Some((0.003, 0.004)) },
        );
        assert!(matches!(
            err,
            Err(BayesError::Density(DensityError::GridTooNarrow { .. }))
        ));
    }
}
