//! Special-function primitives shared across the estimators.
//!
//! Quantile inversions are done by bisection on the corresponding CDF so
//! that every inverse used in the crate is testable against the forward
//! function it inverts.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

/// Absolute tolerance for quantile bisections.
pub const QUANTILE_TOL: f64 = 1e-10;

/// Natural log of the binomial coefficient C(n, k).
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Binomial pmf P(X = k) for X ~ Binom(n, p).
pub fn binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// Binomial CDF P(X <= k) via the regularized incomplete beta duality.
pub fn binom_cdf(k: u64, n: u64, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    // P(X <= k) = I_{1-p}(n-k, k+1)
    beta_reg((n - k) as f64, k as f64 + 1.0, 1.0 - p)
}

/// Upper binomial tail P(X >= k).
pub fn binom_sf_ge(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    // P(X >= k) = I_p(k, n-k+1)
    beta_reg(k as f64, (n - k) as f64 + 1.0, p)
}

/// Regularized incomplete beta function I_x(a, b).
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(a, b, x)
    }
}

/// Beta distribution quantile by bisection on I_x(a, b).
///
/// Monotone bisection to absolute tolerance [`QUANTILE_TOL`]; never panics
/// for a, b > 0 and q in [0, 1].
pub fn beta_quantile(q: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta_quantile needs positive parameters");
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if inc_beta(a, b, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Beta density at x.
pub fn beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    ln_beta_pdf(x, a, b).map_or(0.0, f64::exp)
}

/// Log of the beta density; `None` where the density is zero.
pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> Option<f64> {
    if !(0.0..=1.0).contains(&x) {
        return None;
    }
    if x == 0.0 {
        return if a < 1.0 { Some(f64::INFINITY) } else { None };
    }
    if x == 1.0 {
        return if b < 1.0 { Some(f64::INFINITY) } else { None };
    }
    let ln_norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    Some(ln_norm + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile by bisection on [`normal_cdf`].
pub fn normal_quantile(q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0, "normal quantile needs q in (0,1)");
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided z value for a central confidence level, e.g. 0.95 -> 1.96.
pub fn z_for_level(level: f64) -> f64 {
    assert!(level > 0.0 && level < 1.0, "confidence level must be in (0,1)");
    normal_quantile(0.5 * (1.0 + level))
}

/// Chi-squared quantile with 1 degree of freedom at probability `level`.
///
/// Uses the identity chi2_1 = Z^2.
pub fn chi2_quantile_1(level: f64) -> f64 {
    let z = normal_quantile(0.5 * (1.0 + level));
    z * z
}

/// Chi-squared quantile with 2 degrees of freedom (closed form -2 ln alpha).
pub fn chi2_quantile_2(level: f64) -> f64 {
    assert!(level > 0.0 && level < 1.0);
    -2.0 * (1.0 - level).ln()
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre polynomial roots.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Mean of a Weibull(scale, shape) distribution.
pub fn weibull_mean(scale: f64, shape: f64) -> f64 {
    scale * ln_gamma(1.0 + 1.0 / shape).exp()
}

/// Weibull CDF.
pub fn weibull_cdf(t: f64, scale: f64, shape: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        1.0 - (-(t / scale).powf(shape)).exp()
    }
}
