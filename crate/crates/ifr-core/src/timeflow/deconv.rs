//! Non-negative least squares deconvolution with explicit Tikhonov
//! regularization in augmented-matrix form.

use super::TimeflowError;
use crate::series::{EpiSeries, SeriesKind};
use crate::timeflow::DelayKernel;
use nalgebra::{DMatrix, DVector};

/// Order of the finite-difference operator in the regularization term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    /// Identity matrix (penalize amplitude).
    Zero,
    /// First differences (penalize slope).
    One,
    /// Second differences (penalize curvature).
    Two,
}

/// Configuration of [`deconvolve`].
#[derive(Debug, Clone, Copy)]
pub struct DeconvConfig {
    /// Regularization strength; 0 disables the smoothness term.
    pub lambda_r: f64,
    pub derivative_order: DerivativeOrder,
    /// Zero-padding in days prepended before the first observation so
    /// the inversion can pull counts back in time; must cover the
    /// kernel support.
    pub pad_days: usize,
    pub max_iterations: usize,
}

impl DeconvConfig {
    pub fn new(lambda_r: f64, pad_days: usize) -> Self {
        Self {
            lambda_r,
            derivative_order: DerivativeOrder::Two,
            pad_days,
            max_iterations: 0, // resolved to 3n at solve time
        }
    }
}

/// Difference operator rows of the requested order for an n-vector.
fn difference_matrix(order: DerivativeOrder, n: usize) -> DMatrix<f64> {
    match order {
        DerivativeOrder::Zero => DMatrix::identity(n, n),
        DerivativeOrder::One => {
            let mut l = DMatrix::zeros(n - 1, n);
            for i in 0..n - 1 {
                l[(i, i)] = -1.0;
                l[(i, i + 1)] = 1.0;
            }
            l
        }
        DerivativeOrder::Two => {
            let mut l = DMatrix::zeros(n - 2, n);
            for i in 0..n - 2 {
                l[(i, i)] = 1.0;
                l[(i, i + 1)] = -2.0;
                l[(i, i + 2)] = 1.0;
            }
            l
        }
    }
}

/// Deconvolves `y ~ K * x` for the non-negative daily source `x`,
/// minimizing ||Ax - y||^2 + lambda^2 ||L x||^2 subject to x >= 0 with
/// an active-set method satisfying the KKT conditions.
///
/// The output grid starts `pad_days` before the input and has the same
/// length plus the padding; its values carry the same (unknown) scale
/// as the input.
pub fn deconvolve(
    y: &EpiSeries,
    kernel: &DelayKernel,
    cfg: &DeconvConfig,
) -> Result<EpiSeries, TimeflowError> {
    let support = kernel.support_len();
    if cfg.pad_days + 1 < support {
        return Err(TimeflowError::Deconv(format!(
            "pad_days {} must cover the kernel support {}",
            cfg.pad_days, support
        )));
    }
    let m = y.len();
    let n = m + cfg.pad_days;

    // Convolution (Toeplitz) matrix: y[i] = sum_j K[i + pad - j] x[j].
    let mut a = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let lag = i as i64 + cfg.pad_days as i64 - j as i64;
            if lag >= 0 && (lag as usize) < support {
                a[(i, j)] = kernel.grid_pdf[lag as usize];
            }
        }
    }
    let yv = DVector::from_column_slice(&y.daily);

    // Normal-equation data for the augmented system [A; lambda L].
    let mut g = a.transpose() * &a;
    if cfg.lambda_r > 0.0 {
        let l = difference_matrix(cfg.derivative_order, n);
        g += l.transpose() * l * (cfg.lambda_r * cfg.lambda_r);
    }
    let b = a.transpose() * &yv;

    let max_iter = if cfg.max_iterations == 0 {
        3 * n
    } else {
        cfg.max_iterations
    };
    let x = nnls_normal_equations(&g, &b, max_iter).map_err(TimeflowError::Deconv)?;

    Ok(EpiSeries {
        start: y.start - chrono::Days::new(cfg.pad_days as u64),
        daily: x,
        kind: SeriesKind::Infections,
    })
}

/// Lawson-Hanson active-set NNLS on the normal equations
/// (G = A'A, b = A'y): minimizes ||Ax - y|| s.t. x >= 0.
fn nnls_normal_equations(
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    max_iter: usize,
) -> Result<Vec<f64>, String> {
    let n = b.len();
    let mut passive = vec![false; n];
    let mut x = DVector::zeros(n);
    let scale = b.amax().max(1e-300);
    let tol = 1e-10 * scale;

    for _ in 0..max_iter {
        // Gradient of the objective: w = b - G x.
        let w = b - g * &x;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol && best.is_none_or(|(_, bw)| w[j] > bw) {
                best = Some((j, w[j]));
            }
        }
        let Some((enter, _)) = best else {
            // KKT satisfied: all inactive gradients non-positive.
            return Ok(x.as_slice().to_vec());
        };
        passive[enter] = true;

        // Inner loop: restricted least squares on the passive set, with
        // backtracking when components turn non-positive.
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z = solve_subsystem(g, b, &idx)?;
            let min_z = z.iter().copied().fold(f64::INFINITY, f64::min);
            if min_z > 0.0 {
                x.fill(0.0);
                for (&j, &v) in idx.iter().zip(&z) {
                    x[j] = v;
                }
                break;
            }
            // Step toward z until the first variable hits zero.
            let mut alpha = f64::INFINITY;
            for (&j, &v) in idx.iter().zip(&z) {
                if v <= 0.0 {
                    let denom = x[j] - v;
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                return Err("nnls backtracking failed (degenerate step)".into());
            }
            for (&j, &v) in idx.iter().zip(&z) {
                x[j] += alpha * (v - x[j]);
            }
            for &j in &idx {
                if x[j] <= tol * 1e-3 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    Err(format!(
        "nnls did not converge within {max_iter} iterations; residual norm {:.3e}",
        (b - g * &x).norm()
    ))
}

/// Solves G[P,P] z = b[P] by Cholesky, falling back to SVD when the
/// submatrix is numerically rank deficient.
fn solve_subsystem(g: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> Result<Vec<f64>, String> {
    let p = idx.len();
    let mut gs = DMatrix::zeros(p, p);
    let mut bs = DVector::zeros(p);
    for (r, &i) in idx.iter().enumerate() {
        bs[r] = b[i];
        for (c, &j) in idx.iter().enumerate() {
            gs[(r, c)] = g[(i, j)];
        }
    }
    if let Some(chol) = gs.clone().cholesky() {
        return Ok(chol.solve(&bs).as_slice().to_vec());
    }
    let svd = gs.svd(true, true);
    svd.solve(&bs, 1e-12)
        .map(|v| v.as_slice().to_vec())
        .map_err(|e| format!("subsystem solve failed: {e}"))
}

/// Smallest regularization strength on an ascending ladder whose
/// solution shows no oscillation, defined as: no sign change of the
/// second difference of the solution with magnitude exceeding 5% of the
/// solution peak.
pub fn select_lambda(
    y: &EpiSeries,
    kernel: &DelayKernel,
    base: &DeconvConfig,
    ladder: &[f64],
) -> Result<(f64, EpiSeries), TimeflowError> {
    let mut last: Option<(f64, EpiSeries)> = None;
    for &lambda in ladder {
        let cfg = DeconvConfig { lambda_r: lambda, ..*base };
        match deconvolve(y, kernel, &cfg) {
            Ok(x) => {
                if !oscillates(&x.daily) {
                    return Ok((lambda, x));
                }
                last = Some((lambda, x));
            }
            Err(_) if last.is_some() => continue,
            Err(e) => return Err(e),
        }
    }
    last.ok_or_else(|| TimeflowError::Deconv("no usable regularization strength".into()))
}

fn oscillates(x: &[f64]) -> bool {
    let peak = x.iter().copied().fold(0.0_f64, f64::max);
    if peak <= 0.0 || x.len() < 4 {
        return false;
    }
    let threshold = 0.05 * peak;
    let d2: Vec<f64> = (1..x.len() - 1)
        .map(|i| x[i - 1] - 2.0 * x[i] + x[i + 1])
        .collect();
    for i in 1..d2.len() {
        if d2[i - 1] * d2[i] < 0.0 && d2[i - 1].abs() > threshold && d2[i].abs() > threshold {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeflow::{convolve, convolve_series};
    use chrono::NaiveDate;

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 1).unwrap()
    }

    fn infections(daily: Vec<f64>) -> EpiSeries {
        EpiSeries::new(day0(), daily, SeriesKind::Infections).unwrap()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn noiseless_synthetic_recovery() {
        let kernel = DelayKernel::weibull(8.0, 1.8, 40, "k").unwrap();
        let truth: Vec<f64> = (0..80)
            .map(|t| 120.0 * (-((t as f64 - 30.0) / 9.0).powi(2)).exp())
            .collect();
        let x = infections(truth.clone());
        let observed = convolve_series(&kernel, &x);
        // trim to a finite observation window like real data
        let y = EpiSeries::new(
            observed.start,
            observed.daily[..90].to_vec(),
            SeriesKind::Cases,
        )
        .unwrap();
        let cfg = DeconvConfig::new(0.0, 40);
        let recovered = deconvolve(&y, &kernel, &cfg).unwrap();
        // recovered grid starts pad_days=40 before y -> truth aligns at
        // offset 40
        let aligned = &recovered.daily[40..40 + 80];
        assert!(
            rel_l2(aligned, &truth) < 1e-4,
            "rel l2 {}",
            rel_l2(aligned, &truth)
        );
    }

    #[test]
    fn delta_kernel_identity_inversion() {
        let kernel = DelayKernel::delta(0, "d");
        let y = EpiSeries::new(day0(), vec![1.0, 5.0, 2.0, 8.0, 3.0], SeriesKind::Cases).unwrap();
        let cfg = DeconvConfig::new(0.0, 1);
        let x = deconvolve(&y, &kernel, &cfg).unwrap();
        assert!(rel_l2(&x.daily[1..], &y.daily) < 1e-10);
    }

    #[test]
    fn pad_must_cover_kernel() {
        let kernel = DelayKernel::weibull(8.0, 1.8, 40, "k").unwrap();
        let y = EpiSeries::new(day0(), vec![1.0; 30], SeriesKind::Cases).unwrap();
        let cfg = DeconvConfig::new(0.0, 5);
        assert!(deconvolve(&y, &kernel, &cfg).is_err());
    }

    #[test]
    fn regularization_reduces_total_variation() {
        // Noisy observation: higher lambda gives weakly smaller ||L x||.
        let kernel = DelayKernel::weibull(8.0, 1.8, 40, "k").unwrap();
        let truth: Vec<f64> = (0..70)
            .map(|t| 100.0 * (-((t as f64 - 28.0) / 8.0).powi(2)).exp())
            .collect();
        let clean = convolve(&truth, &kernel.grid_pdf);
        // deterministic pseudo-noise
        let noisy: Vec<f64> = clean
            .iter()
            .take(85)
            .enumerate()
            .map(|(i, &v)| (v + 8.0 * ((i as f64 * 2.39).sin())).max(0.0))
            .collect();
        let y = EpiSeries::new(day0(), noisy, SeriesKind::Cases).unwrap();
        let base = DeconvConfig::new(0.0, 40);
        let mut last_tv = f64::INFINITY;
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let cfg = DeconvConfig { lambda_r: lambda, ..base };
            let x = deconvolve(&y, &kernel, &cfg).unwrap();
            let tv: f64 = (1..x.daily.len() - 1)
                .map(|i| (x.daily[i - 1] - 2.0 * x.daily[i] + x.daily[i + 1]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(tv <= last_tv * (1.0 + 1e-9), "lambda {lambda}: tv {tv} > {last_tv}");
            last_tv = tv;
        }
    }

    #[test]
    fn forward_then_inverse_consistency() {
        let kernel = DelayKernel::weibull(10.0, 2.0, 50, "k").unwrap();
        let truth: Vec<f64> = (0..90)
            .map(|t| 200.0 * (-((t as f64 - 40.0) / 14.0).powi(2)).exp())
            .collect();
        let x = infections(truth);
        let y_full = convolve_series(&kernel, &x);
        let y = EpiSeries::new(
            y_full.start,
            y_full.daily[..110].to_vec(),
            SeriesKind::Cases,
        )
        .unwrap();
        let cfg = DeconvConfig::new(0.05, 50);
        let recovered = deconvolve(&y, &kernel, &cfg).unwrap();
        let reproj = convolve(&recovered.daily, &kernel.grid_pdf);
        // compare on the observed window, which starts pad_days into the
        // reprojection grid
        let window: Vec<f64> = reproj[50..50 + y.len()].to_vec();
        assert!(rel_l2(&window, &y.daily) < 0.01);
    }

    #[test]
    fn solution_satisfies_kkt_conditions() {
        // At the solution: active (zero) variables have non-positive
        // gradient of the least-squares objective, passive variables a
        // vanishing one.
        let kernel = DelayKernel::weibull(8.0, 1.8, 40, "k").unwrap();
        let truth: Vec<f64> = (0..60)
            .map(|t| 80.0 * (-((t as f64 - 25.0) / 7.0).powi(2)).exp())
            .collect();
        let clean = convolve(&truth, &kernel.grid_pdf);
        let noisy: Vec<f64> = clean
            .iter()
            .take(75)
            .enumerate()
            .map(|(i, &v)| (v + 5.0 * ((i as f64 * 3.1).sin())).max(0.0))
            .collect();
        let y = EpiSeries::new(day0(), noisy, SeriesKind::Cases).unwrap();
        let cfg = DeconvConfig::new(1.0, 40);
        let x = deconvolve(&y, &kernel, &cfg).unwrap();

        // rebuild the normal-equation data
        let m = y.len();
        let n = m + cfg.pad_days;
        let mut a = nalgebra::DMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let lag = i as i64 + cfg.pad_days as i64 - j as i64;
                if lag >= 0 && (lag as usize) < kernel.support_len() {
                    a[(i, j)] = kernel.grid_pdf[lag as usize];
                }
            }
        }
        let l = difference_matrix(cfg.derivative_order, n);
        let g = a.transpose() * &a + l.transpose() * &l * (cfg.lambda_r * cfg.lambda_r);
        let b = a.transpose() * nalgebra::DVector::from_column_slice(&y.daily);
        let xv = nalgebra::DVector::from_column_slice(&x.daily);
        let grad = &b - &g * &xv;
        let tol = 1e-6 * b.amax();
        for j in 0..n {
            if x.daily[j] > 1e-9 {
                assert!(grad[j].abs() <= tol, "passive var {j}: gradient {}", grad[j]);
            } else {
                assert!(grad[j] <= tol, "active var {j}: gradient {}", grad[j]);
            }
        }
    }

    #[test]
    fn lambda_selection_prefers_smooth_solutions() {
        let kernel = DelayKernel::weibull(8.0, 1.8, 40, "k").unwrap();
        let truth: Vec<f64> = (0..70)
            .map(|t| 90.0 * (-((t as f64 - 30.0) / 10.0).powi(2)).exp())
            .collect();
        let clean = convolve(&truth, &kernel.grid_pdf);
        let noisy: Vec<f64> = clean
            .iter()
            .take(85)
            .enumerate()
            .map(|(i, &v)| (v + 6.0 * ((i as f64 * 1.77).sin())).max(0.0))
            .collect();
        let y = EpiSeries::new(day0(), noisy, SeriesKind::Cases).unwrap();
        let base = DeconvConfig::new(0.0, 40);
        let ladder = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0];
        let (lambda, x) = select_lambda(&y, &kernel, &base, &ladder).unwrap();
        assert!(!oscillates(&x.daily));
        assert!(ladder.contains(&lambda));
    }
}
