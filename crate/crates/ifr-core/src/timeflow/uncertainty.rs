//! Monte Carlo propagation of kernel-parameter and counting
//! uncertainties through the deconvolution chain.

use super::deconv::{deconvolve, DeconvConfig};
use super::{convolve, cumsum, unit_crossing, DelayKernel, KernelSet, TimeflowError};
use crate::rng::substream;
use crate::series::EpiSeries;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

/// Relative 1-sigma uncertainties on each component kernel's Weibull
/// parameters.
///
/// Replicate draws are correlated across kernels: one standard normal
/// drives every scale, another every shape. The delays stretch and
/// shrink together, which is what a common fitting systematic does;
/// independent per-kernel draws would overstate the spread of the
/// delay difference between the death and seroconversion paths.
#[derive(Debug, Clone, Copy)]
pub struct KernelUncertainty {
    pub i_to_o: (f64, f64),
    pub o_to_c: (f64, f64),
    pub o_to_s: (f64, f64),
    pub c_to_f: (f64, f64),
}

impl KernelUncertainty {
    /// The default 20% relative uncertainty on every parameter.
    pub fn default_20pct() -> Self {
        Self {
            i_to_o: (0.2, 0.2),
            o_to_c: (0.2, 0.2),
            o_to_s: (0.2, 0.2),
            c_to_f: (0.2, 0.2),
        }
    }

    pub fn none() -> Self {
        Self {
            i_to_o: (0.0, 0.0),
            o_to_c: (0.0, 0.0),
            o_to_s: (0.0, 0.0),
            c_to_f: (0.0, 0.0),
        }
    }
}

/// Configuration of [`propagate_delay_uncertainty`].
#[derive(Debug, Clone)]
pub struct UncertaintyConfig {
    pub n_mc: u64,
    pub seed: u64,
    /// Poisson-fluctuate the daily input counts.
    pub poisson_noise: bool,
    pub kernel_unc: KernelUncertainty,
    pub deconv: DeconvConfig,
    /// Kernel truncation horizon in days.
    pub t_max: usize,
}

/// Uncertainty bands of psi(t, dt) at a fixed t, the per-replicate
/// optimal delays and the relative scale uncertainty on the read-out
/// death count.
#[derive(Debug, Clone)]
pub struct DelayUncertainty {
    pub dt_grid: Vec<f64>,
    pub psi_central: Vec<f64>,
    /// 16th / 84th percentile bands over replicates.
    pub psi_lo: Vec<f64>,
    pub psi_hi: Vec<f64>,
    /// Optimal delay from the central curve (None when psi never
    /// crosses one).
    pub optimal_dt: Option<f64>,
    /// 68% interval over the per-replicate unit crossings.
    pub optimal_dt_ci68: Option<(f64, f64)>,
    /// Relative systematic scale uncertainty of the death-count
    /// read-out n_F(dt*) over the per-replicate optimal delays.
    pub delta_gamma: f64,
    pub failed_replicates: u64,
}

/// Propagates Poisson counting noise and correlated Gaussian
/// kernel-parameter perturbations through deconvolution and the psi
/// ratio.
///
/// `t` is measured in days from the start of `cases`. `readout` maps a
/// read-out delay to the death count n_F(dt) used for the delta-gamma
/// spread; pass the windowed cumulative death average for real data.
pub fn propagate_delay_uncertainty(
    cases: &EpiSeries,
    kernels: &KernelSet,
    cfg: &UncertaintyConfig,
    t: f64,
    dt_grid: &[f64],
    readout: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<DelayUncertainty, TimeflowError> {
    if cfg.n_mc < 100 {
        return Err(TimeflowError::Deconv(format!(
            "need at least 100 uncertainty replicates, got {}",
            cfg.n_mc
        )));
    }
    let central = psi_curve(cases, kernels, &cfg.deconv, t, dt_grid, None)?;

    let replicates: Vec<Option<Vec<f64>>> = (0..cfg.n_mc)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(cfg.seed, rep);
            let fluctuated: Vec<f64> = cases
                .daily
                .iter()
                .map(|&v| {
                    if !cfg.poisson_noise || v <= 0.0 {
                        v
                    } else {
                        Poisson::new(v).expect("positive mean").sample(&mut rng)
                    }
                })
                .collect();
            let series = EpiSeries {
                start: cases.start,
                daily: fluctuated,
                kind: cases.kind,
            };
            let perturbed =
                perturb_kernels(kernels, &cfg.kernel_unc, cfg.t_max, &mut rng).ok()?;
            psi_curve(&series, &perturbed, &cfg.deconv, t, dt_grid, None).ok()
        })
        .collect();

    let good: Vec<&Vec<f64>> = replicates.iter().flatten().collect();
    let failed = cfg.n_mc - good.len() as u64;
    if failed * 10 > cfg.n_mc {
        return Err(TimeflowError::TooManyFailures {
            failed,
            total: cfg.n_mc,
        });
    }

    // Percentile bands per dt.
    let mut psi_lo = Vec::with_capacity(dt_grid.len());
    let mut psi_hi = Vec::with_capacity(dt_grid.len());
    let mut column = Vec::with_capacity(good.len());
    for j in 0..dt_grid.len() {
        column.clear();
        column.extend(good.iter().map(|curve| curve[j]));
        column.sort_by(f64::total_cmp);
        psi_lo.push(percentile(&column, 0.15865));
        psi_hi.push(percentile(&column, 0.84135));
    }

    // Per-replicate optimal delays and their death-count read-outs.
    let crossings: Vec<f64> = good
        .iter()
        .filter_map(|curve| unit_crossing(dt_grid, curve))
        .collect();
    let optimal_dt = unit_crossing(dt_grid, &central);
    let optimal_dt_ci68 = if !crossings.is_empty() && crossings.len() * 2 >= good.len() {
        let mut sorted = crossings.clone();
        sorted.sort_by(f64::total_cmp);
        Some((percentile(&sorted, 0.15865), percentile(&sorted, 0.84135)))
    } else {
        None
    };

    let delta_gamma = if crossings.is_empty() {
        0.0
    } else {
        let counts: Vec<f64> = crossings.iter().map(|&dt| readout(dt)).collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        if mean <= 0.0 {
            0.0
        } else {
            let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
                / counts.len() as f64;
            var.sqrt() / mean
        }
    };

    Ok(DelayUncertainty {
        dt_grid: dt_grid.to_vec(),
        psi_central: central,
        psi_lo,
        psi_hi,
        optimal_dt,
        optimal_dt_ci68,
        delta_gamma,
        failed_replicates: failed,
    })
}

/// psi(t, dt) over a dt grid for one input realization: deconvolve the
/// cases with K_C, then project with K_F and K_S.
fn psi_curve(
    cases: &EpiSeries,
    kernels: &KernelSet,
    deconv_cfg: &DeconvConfig,
    t: f64,
    dt_grid: &[f64],
    precomputed_i_hat: Option<&EpiSeries>,
) -> Result<Vec<f64>, TimeflowError> {
    let k_c = kernels.k_c();
    // The pull-back padding must cover the inversion kernel's support.
    let cfg = DeconvConfig {
        pad_days: deconv_cfg.pad_days.max(k_c.support_len()),
        ..*deconv_cfg
    };
    let owned;
    let i_hat = match precomputed_i_hat {
        Some(x) => x,
        None => {
            owned = deconvolve(cases, &k_c, &cfg)?;
            &owned
        }
    };
    let num_cum = cumsum(&convolve(&i_hat.daily, &kernels.k_f().grid_pdf));
    let den_cum = cumsum(&convolve(&i_hat.daily, &kernels.k_s().grid_pdf));
    // t is relative to `cases`; i_hat starts pad_days earlier.
    let t_inner = t + cfg.pad_days as f64;
    dt_grid
        .iter()
        .map(|&dt| super::psi_from_projections(t_inner, dt, &num_cum, &den_cum))
        .collect()
}

fn perturb_kernels(
    kernels: &KernelSet,
    unc: &KernelUncertainty,
    t_max: usize,
    rng: &mut impl rand::Rng,
) -> Result<KernelSet, TimeflowError> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z_scale: f64 = std_normal.sample(rng);
    let z_shape: f64 = std_normal.sample(rng);
    let draw = |k: &DelayKernel, rel: (f64, f64)| -> Result<DelayKernel, TimeflowError> {
        let scale = (k.scale * (1.0 + z_scale * rel.0)).max(0.05 * k.scale);
        let shape = (k.shape * (1.0 + z_shape * rel.1)).max(0.05 * k.shape);
        DelayKernel::weibull(scale, shape, t_max, k.label.clone())
    };
    Ok(KernelSet {
        i_to_o: draw(&kernels.i_to_o, unc.i_to_o)?,
        o_to_c: draw(&kernels.o_to_c, unc.o_to_c)?,
        o_to_s: draw(&kernels.o_to_s, unc.o_to_s)?,
        c_to_f: draw(&kernels.c_to_f, unc.c_to_f)?,
    })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = q * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] * (hi as f64 - idx) + sorted[hi] * (idx - lo as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::SeriesKind;
    use chrono::NaiveDate;

    fn test_kernels(t_max: usize) -> KernelSet {
        KernelSet {
            i_to_o: DelayKernel::weibull(5.9, 1.74, t_max, "I>O").unwrap(),
            o_to_c: DelayKernel::weibull(6.1, 1.35, t_max, "O>C").unwrap(),
            o_to_s: DelayKernel::weibull(12.4, 3.57, t_max, "O>S").unwrap(),
            c_to_f: DelayKernel::weibull(14.2, 1.55, t_max, "C>F").unwrap(),
        }
    }

    fn bump_series(len: usize, center: f64, width: f64, amp: f64) -> EpiSeries {
        EpiSeries::new(
            NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(),
            (0..len)
                .map(|t| amp * (-((t as f64 - center) / width).powi(2)).exp())
                .collect(),
            SeriesKind::Cases,
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_bands_collapse() {
        let kernels = test_kernels(60);
        let cases = bump_series(120, 45.0, 12.0, 400.0);
        let cfg = UncertaintyConfig {
            n_mc: 100,
            seed: 5,
            poisson_noise: false,
            kernel_unc: KernelUncertainty::none(),
            deconv: DeconvConfig::new(0.5, 60),
            t_max: 60,
        };
        let dt_grid: Vec<f64> = (0..200).map(|i| 0.25 * i as f64).collect();
        let readout = |dt: f64| 100.0 + dt;
        let out =
            propagate_delay_uncertainty(&cases, &kernels, &cfg, 80.0, &dt_grid, &readout)
                .unwrap();
        assert_eq!(out.failed_replicates, 0);
        for j in 0..dt_grid.len() {
            assert!((out.psi_lo[j] - out.psi_central[j]).abs() < 1e-9);
            assert!((out.psi_hi[j] - out.psi_central[j]).abs() < 1e-9);
        }
        assert!(out.delta_gamma < 1e-12);
    }

    #[test]
    fn kernel_noise_produces_finite_bands() {
        let kernels = test_kernels(60);
        let cases = bump_series(120, 45.0, 12.0, 400.0);
        let cfg = UncertaintyConfig {
            n_mc: 120,
            seed: 6,
            poisson_noise: true,
            kernel_unc: KernelUncertainty::default_20pct(),
            deconv: DeconvConfig::new(0.5, 60),
            t_max: 60,
        };
        let dt_grid: Vec<f64> = (0..200).map(|i| 0.25 * i as f64).collect();
        // growing read-out curve: spread in dt* implies spread in counts
        let readout = |dt: f64| 100.0 * (0.08 * dt).exp();
        let out =
            propagate_delay_uncertainty(&cases, &kernels, &cfg, 80.0, &dt_grid, &readout)
                .unwrap();
        let mut widened = false;
        for j in 0..dt_grid.len() {
            assert!(out.psi_lo[j] <= out.psi_hi[j] + 1e-12);
            if out.psi_hi[j] - out.psi_lo[j] > 1e-6 {
                widened = true;
            }
        }
        assert!(widened);
        if out.optimal_dt.is_some() {
            assert!(out.delta_gamma > 0.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let kernels = test_kernels(50);
        let cases = bump_series(100, 40.0, 10.0, 300.0);
        let cfg = UncertaintyConfig {
            n_mc: 100,
            seed: 11,
            poisson_noise: true,
            kernel_unc: KernelUncertainty::default_20pct(),
            deconv: DeconvConfig::new(0.5, 50),
            t_max: 50,
        };
        let dt_grid: Vec<f64> = (0..100).map(|i| 0.5 * i as f64).collect();
        let readout = |dt: f64| 50.0 + 2.0 * dt;
        let a = propagate_delay_uncertainty(&cases, &kernels, &cfg, 70.0, &dt_grid, &readout)
            .unwrap();
        let b = propagate_delay_uncertainty(&cases, &kernels, &cfg, 70.0, &dt_grid, &readout)
            .unwrap();
        assert_eq!(a.psi_lo, b.psi_lo);
        assert_eq!(a.delta_gamma, b.delta_gamma);
    }
}
