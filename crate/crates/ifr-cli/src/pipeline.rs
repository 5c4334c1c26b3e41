//! The end-to-end multi-study estimation pipeline: per-dataset death
//! read-outs, test-error systematics, delay systematics, dressed
//! posteriors and the combination strategies.

use crate::config::{DatasetConfig, LoadedKernels, StudyConfig};
use crate::timeseries::{load_timeseries, SeriesBundle};
use crate::CliError;
use chrono::NaiveDate;
use ifr_core::bayes::{
    dressed_ratio_posterior, RatioGridSpec, ScaleFamily, ScalePrior,
};
use ifr_core::density::credible_interval;
use ifr_core::fusion::{
    joint_llr_combine, mean_of_posteriors, mom_combine, nl_fit, ot_barycenter,
    product_of_posteriors, StudyEstimate,
};
use ifr_core::interval::IntervalEstimate;
use ifr_core::ratio::RatioCounts;
use ifr_core::rng::stable_hash;
use ifr_core::series::EpiSeries;
use ifr_core::testerr::renormalize_lambda;
use ifr_core::timeflow::{
    propagate_delay_uncertainty, select_lambda, DeconvConfig, UncertaintyConfig,
};
use ifr_core::GridDensity;
use rayon::prelude::*;
use std::path::Path;

/// Moving average of the cumulative death count over the test period,
/// read out `dt` days later, rounded to the nearest integer for count
/// usage.
pub fn moving_avg_deaths(
    deaths: &EpiSeries,
    period: (NaiveDate, NaiveDate),
    dt: f64,
) -> Result<u64, CliError> {
    Ok(moving_avg_deaths_fractional(deaths, period, dt)?.round() as u64)
}

/// Unrounded moving average with fractional read-out delays
/// (interpolated between days).
pub fn moving_avg_deaths_fractional(
    deaths: &EpiSeries,
    period: (NaiveDate, NaiveDate),
    dt: f64,
) -> Result<f64, CliError> {
    if period.0 > period.1 {
        return Err(CliError::Validation(
            "test period start after end".into(),
        ));
    }
    let cum = deaths.cumulative();
    let start = deaths.offset_of(period.0)? as f64;
    let days = (period.1 - period.0).num_days() + 1;
    let last = start + (days - 1) as f64 + dt;
    if last > (deaths.len() - 1) as f64 + 1e-9 {
        return Err(CliError::Validation(format!(
            "read-out window extends {:.1} days beyond the deaths series",
            last - (deaths.len() - 1) as f64
        )));
    }
    if start + dt < 0.0 {
        return Err(CliError::Validation(
            "read-out window starts before the deaths series".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..days {
        total += ifr_core::series::interp_clamped(&cum, start + i as f64 + dt);
    }
    Ok(total / days as f64)
}

/// Infected-count interval implied by an IFR interval and a death toll;
/// the upper IFR endpoint maps to the lower count.
#[derive(Debug, Clone, Copy)]
pub struct CountInterval {
    pub lower: f64,
    pub point: f64,
    pub upper: f64,
    /// The IFR interval touched zero, making the upper count unbounded.
    pub upper_unbounded: bool,
}

/// Population extrapolation: total infections = deaths / IFR, applied
/// endpoint-wise. `ifr_point` is the central rate (e.g. the ML estimate
/// k/n, which is not the Wilson center).
pub fn germany_extrapolation(
    ifr: &IntervalEstimate,
    ifr_point: f64,
    total_deaths: f64,
) -> Result<CountInterval, CliError> {
    if ifr.upper <= 0.0 || ifr_point <= 0.0 {
        return Err(CliError::Validation(
            "extrapolation needs a positive rate interval".into(),
        ));
    }
    let unbounded = ifr.lower <= 0.0;
    Ok(CountInterval {
        lower: total_deaths / ifr.upper,
        point: total_deaths / ifr_point,
        upper: if unbounded {
            f64::INFINITY
        } else {
            total_deaths / ifr.lower
        },
        upper_unbounded: unbounded,
    })
}

/// Density summary row matching the output table layout.
#[derive(Debug, Clone, Copy)]
pub struct Summary {
    pub mode: f64,
    pub mean: f64,
    pub q68: (f64, f64),
    pub q95: (f64, f64),
}

impl Summary {
    pub fn of(d: &GridDensity) -> Self {
        let q68 = credible_interval(d, 0.6827);
        let q95 = credible_interval(d, 0.95);
        Self {
            mode: d.mode(),
            mean: d.mean(),
            q68: (q68.lower, q68.upper),
            q95: (q95.lower, q95.upper),
        }
    }

    pub fn of_gaussian(center: f64, sigma: f64) -> Self {
        let z68 = ifr_core::special::z_for_level(0.6827);
        let z95 = ifr_core::special::z_for_level(0.95);
        Self {
            mode: center,
            mean: center,
            q68: (center - z68 * sigma, center + z68 * sigma),
            q95: (center - z95 * sigma, center + z95 * sigma),
        }
    }
}

/// One dataset's result at a fixed read-out delay.
#[derive(Debug, Clone)]
pub struct FixedDelayResult {
    pub dt: u64,
    pub n_f: u64,
    pub counts: RatioCounts,
    pub density: GridDensity,
    pub summary: Summary,
}

/// One dataset's adaptive-delay result.
#[derive(Debug, Clone)]
pub struct AdaptiveResult {
    pub dt: f64,
    pub dt_ci68: Option<(f64, f64)>,
    pub n_f: u64,
    pub counts: RatioCounts,
    pub delta_gamma: f64,
    pub density: GridDensity,
    pub summary: Summary,
}

/// Everything computed for one dataset.
#[derive(Debug, Clone)]
pub struct DatasetOutput {
    pub name: String,
    pub population: u64,
    pub tests: u64,
    pub positives: u64,
    pub delta_lambda: f64,
    pub fixed: Vec<FixedDelayResult>,
    pub adaptive: Option<AdaptiveResult>,
    /// Failure reason when the dataset was skipped.
    pub skipped: Option<String>,
    pub warnings: Vec<String>,
}

/// A fused row of the combination table.
#[derive(Debug, Clone)]
pub struct FusedRow {
    pub delay_tag: String,
    pub strategy: String,
    pub summary: Summary,
    /// Density-valued strategies export their fused density.
    pub density: Option<GridDensity>,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub datasets: Vec<DatasetOutput>,
    pub fused: Vec<FusedRow>,
}

/// Runs the full pipeline for every dataset and all combination
/// strategies.
///
/// Per-dataset failures are isolated: the dataset is recorded as
/// skipped with its reason and the run continues.
pub fn run_pipeline(
    cfg: &StudyConfig,
    kernels: &LoadedKernels,
    base: &Path,
) -> Result<PipelineOutput, CliError> {
    // Datasets are independent (per-dataset substreams keyed by name);
    // output order follows the config regardless of schedule.
    let datasets: Vec<DatasetOutput> = cfg
        .datasets
        .par_iter()
        .map(|d| match process_dataset(cfg, kernels, base, d) {
            Ok(out) => out,
            Err(e) => DatasetOutput {
                name: d.name.clone(),
                population: d.population,
                tests: d.tests,
                positives: d.positives,
                delta_lambda: f64::NAN,
                fixed: Vec::new(),
                adaptive: None,
                skipped: Some(e.to_string()),
                warnings: Vec::new(),
            },
        })
        .collect();

    let mut fused = Vec::new();
    for &dt in &cfg.global.fixed_delays {
        let tag = format!("dt={dt}");
        fuse_at(&mut fused, &tag, collect_at_fixed(&datasets, dt));
    }
    fuse_at(&mut fused, "adaptive", collect_adaptive(&datasets));

    Ok(PipelineOutput { datasets, fused })
}

fn collect_at_fixed(datasets: &[DatasetOutput], dt: u64) -> Vec<(&GridDensity, RatioCounts)> {
    datasets
        .iter()
        .filter(|d| d.skipped.is_none())
        .filter_map(|d| {
            d.fixed
                .iter()
                .find(|f| f.dt == dt)
                .map(|f| (&f.density, f.counts))
        })
        .collect()
}

fn collect_adaptive(datasets: &[DatasetOutput]) -> Vec<(&GridDensity, RatioCounts)> {
    datasets
        .iter()
        .filter(|d| d.skipped.is_none())
        .filter_map(|d| d.adaptive.as_ref().map(|a| (&a.density, a.counts)))
        .collect()
}

fn fuse_at(rows: &mut Vec<FusedRow>, tag: &str, inputs: Vec<(&GridDensity, RatioCounts)>) {
    if inputs.len() < 2 {
        return;
    }
    let densities: Vec<&GridDensity> = inputs.iter().map(|(d, _)| *d).collect();
    let counts: Vec<RatioCounts> = inputs.iter().map(|(_, c)| *c).collect();

    // Study estimates: observed (ML) ratio with the CR68 half-width.
    let estimates: Vec<StudyEstimate> = inputs
        .iter()
        .map(|(d, c)| {
            let cr68 = credible_interval(d, 0.6827);
            StudyEstimate::new(c.ratio(), 0.5 * cr68.width()).expect("positive half width")
        })
        .collect();
    let inv_var: Vec<f64> = estimates.iter().map(|e| 1.0 / (e.se * e.se)).collect();

    if let Ok(fit) = mom_combine(&estimates) {
        rows.push(FusedRow {
            delay_tag: tag.into(),
            strategy: "mom".into(),
            summary: Summary::of_gaussian(fit.r_hat, fit.se_r),
            density: None,
        });
    }
    if let Ok(fit) = nl_fit(&estimates) {
        rows.push(FusedRow {
            delay_tag: tag.into(),
            strategy: "nl".into(),
            summary: Summary::of_gaussian(fit.r_hat, fit.se_r),
            density: None,
        });
    }
    if let Ok(f) = ot_barycenter(&densities, &[]) {
        rows.push(FusedRow {
            delay_tag: tag.into(),
            strategy: "ot".into(),
            summary: Summary::of(&f.density),
            density: Some(f.density),
        });
    }
    if let Ok(f) = ot_barycenter(&densities, &inv_var) {
        rows.push(FusedRow {
            delay_tag: tag.into(),
            strategy: "ot-invvar".into(),
            summary: Summary::of(&f.density),
            density: Some(f.density),
        });
    }
    if let Ok(f) = mean_of_posteriors(&densities, &[]) {
        rows.push(FusedRow {
            delay_tag: tag.into(),
            strategy: "sum".into(),
            summary: Summary::of(&f.density),
            density: Some(f.density),
        });
    }
    if let Ok(f) = product_of_posteriors(&densities, &[]) {
        rows.push(FusedRow {
            delay_tag: tag.into(),
            strategy: "prod".into(),
            summary: Summary::of(&f.density),
            density: Some(f.density),
        });
    }
    if let Ok(fit) = joint_llr_combine(&counts, 0.95) {
        let q68 = joint_llr_combine(&counts, 0.6827)
            .map(|f| (f.interval.lower, f.interval.upper))
            .unwrap_or((f64::NAN, f64::NAN));
        rows.push(FusedRow {
            delay_tag: tag.into(),
            strategy: "joint-llr".into(),
            summary: Summary {
                mode: fit.r_hat,
                mean: fit.r_hat,
                q68,
                q95: (fit.interval.lower, fit.interval.upper),
            },
            density: None,
        });
    }
}

fn process_dataset(
    cfg: &StudyConfig,
    kernels: &LoadedKernels,
    base: &Path,
    d: &DatasetConfig,
) -> Result<DatasetOutput, CliError> {
    let mut warnings = Vec::new();
    let tc = cfg.characteristics(d)?;

    // Corrected prevalence (inverting first when the count is raw).
    let p_hat = if d.positives_raw {
        let q = d.positives as f64 / d.tests as f64;
        ifr_core::testerr::invert_prevalence(q, &tc)?
    } else {
        d.positives as f64 / d.tests as f64
    };
    let effective_positives = (p_hat * d.tests as f64).round() as u64;

    // Test-error systematic scale.
    let lam = renormalize_lambda(p_hat, d.tests, &tc)?;
    if lam.clamped {
        warnings.push("delta-lambda quadrature clamped at zero".into());
    }

    let series = d
        .timeseries
        .as_ref()
        .map(|rel| load_timeseries(&base.join(rel)))
        .transpose()?;
    let mut series = series;
    if d.normalize_by_tests {
        let bundle = series.as_mut().ok_or_else(|| {
            CliError::Validation(format!("{}: normalize_by_tests needs a timeseries", d.name))
        })?;
        bundle.normalize_cases_by_tests()?;
    }

    let prior = cfg.global.prior.params();
    let family: ScaleFamily = cfg.global.scale_family.into();
    let spec = RatioGridSpec {
        points: cfg.global.grid_points,
        bounds: None,
    };
    let scale_prior = |sigma: f64| -> Result<ScalePrior, CliError> {
        Ok(match family {
            ScaleFamily::Normal => ScalePrior::normal(1.0, sigma)?,
            ScaleFamily::Gamma => {
                if sigma == 0.0 {
                    ScalePrior::unit()
                } else {
                    ScalePrior::gamma(1.0, sigma)?
                }
            }
        })
    };

    // Fixed read-out delays.
    let mut fixed = Vec::new();
    for &dt in &cfg.global.fixed_delays {
        let n_f = match (&series, &d.deaths_by_delay) {
            (Some(bundle), _) => moving_avg_deaths(&bundle.deaths, d.test_period, dt as f64)?,
            (None, Some(map)) => *map.get(&dt).ok_or_else(|| {
                CliError::Validation(format!("{}: no death count for dt={dt}", d.name))
            })?,
            (None, None) => unreachable!("validated"),
        };
        let counts = RatioCounts::new(n_f, d.population, effective_positives, d.tests)?;
        let (density, diag) = dressed_ratio_posterior(
            counts,
            prior,
            prior,
            ScalePrior::unit(),
            scale_prior(lam.delta_lambda)?,
            spec,
        )?;
        warnings.extend(diag.warnings);
        fixed.push(FixedDelayResult {
            dt,
            n_f,
            counts,
            summary: Summary::of(&density),
            density,
        });
    }

    // Adaptive read-out delay.
    let adaptive = match (&series, d.fixed_delay) {
        (_, Some(dt_fixed)) => {
            // Series-less studies carry their read-out delay and count.
            let n_f = d.deaths_at_fixed_delay.ok_or_else(|| {
                CliError::Validation(format!(
                    "{}: fixed_delay needs deaths_at_fixed_delay",
                    d.name
                ))
            })?;
            let counts = RatioCounts::new(n_f, d.population, effective_positives, d.tests)?;
            let (density, diag) = dressed_ratio_posterior(
                counts,
                prior,
                prior,
                ScalePrior::unit(),
                scale_prior(lam.delta_lambda)?,
                spec,
            )?;
            warnings.extend(diag.warnings);
            Some(AdaptiveResult {
                dt: dt_fixed,
                dt_ci68: None,
                n_f,
                counts,
                delta_gamma: 0.0,
                summary: Summary::of(&density),
                density,
            })
        }
        (Some(bundle), None) => {
            match adaptive_delay(cfg, kernels, d, bundle, &mut warnings) {
                Ok(r) => {
                    let n_f = moving_avg_deaths(&bundle.deaths, d.test_period, r.0)?;
                    let counts =
                        RatioCounts::new(n_f, d.population, effective_positives, d.tests)?;
                    let (density, diag) = dressed_ratio_posterior(
                        counts,
                        prior,
                        prior,
                        scale_prior(r.2)?,
                        scale_prior(lam.delta_lambda)?,
                        spec,
                    )?;
                    warnings.extend(diag.warnings);
                    Some(AdaptiveResult {
                        dt: r.0,
                        dt_ci68: r.1,
                        n_f,
                        counts,
                        delta_gamma: r.2,
                        summary: Summary::of(&density),
                        density,
                    })
                }
                Err(e) => {
                    warnings.push(format!("adaptive delay unavailable: {e}"));
                    None
                }
            }
        }
        (None, None) => None,
    };

    Ok(DatasetOutput {
        name: d.name.clone(),
        population: d.population,
        tests: d.tests,
        positives: effective_positives,
        delta_lambda: lam.delta_lambda,
        fixed,
        adaptive,
        skipped: None,
        warnings,
    })
}

/// Solves the adaptive read-out delay and its systematics for one
/// dataset: returns (dt, dt CI68, delta_gamma).
#[allow(clippy::type_complexity)]
fn adaptive_delay(
    cfg: &StudyConfig,
    kernels: &LoadedKernels,
    d: &DatasetConfig,
    bundle: &SeriesBundle,
    warnings: &mut Vec<String>,
) -> Result<(f64, Option<(f64, f64)>, f64), CliError> {
    let mid = d.test_period.0 + chrono::Days::new(
        ((d.test_period.1 - d.test_period.0).num_days() as u64) / 2,
    );
    let t = bundle.cases.offset_of(mid)? as f64;

    // Regularization strength: smallest smooth solution on a ladder.
    let k_c = kernels.set.k_c();
    let pad = k_c.support_len();
    let base_cfg = DeconvConfig::new(0.0, pad);
    let ladder = [0.0, 0.01, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0, 500.0];
    let (lambda_r, _) = select_lambda(&bundle.cases, &k_c, &base_cfg, &ladder)?;

    let dt_grid: Vec<f64> = (0..=1200).map(|i| i as f64 * 0.1).collect();
    let seed = cfg.global.seed ^ stable_hash(d.name.as_bytes());
    let unc_cfg = UncertaintyConfig {
        n_mc: cfg.global.uncertainty_replicates,
        seed,
        poisson_noise: true,
        kernel_unc: kernels.uncertainty,
        deconv: DeconvConfig {
            lambda_r,
            ..base_cfg
        },
        t_max: kernels.t_max,
    };

    // Death-count read-out for the delta-gamma spread.
    let deaths = bundle.deaths.clone();
    let period = d.test_period;
    let readout = move |dt: f64| -> f64 {
        moving_avg_deaths_fractional(&deaths, period, dt).unwrap_or(f64::NAN)
    };
    let out = propagate_delay_uncertainty(
        &bundle.cases,
        &kernels.set,
        &unc_cfg,
        t,
        &dt_grid,
        &readout,
    )?;
    if out.failed_replicates > 0 {
        warnings.push(format!(
            "{} uncertainty replicates failed deconvolution",
            out.failed_replicates
        ));
    }
    let dt = out
        .optimal_dt
        .ok_or(ifr_core::timeflow::TimeflowError::NoCrossing)?;
    Ok((dt, out.optimal_dt_ci68, out.delta_gamma))
}

/// Tidy CSV emitters mirroring the reference table layouts.
pub mod tables {
    use super::{DatasetOutput, FusedRow};

    pub fn per_dataset_csv(datasets: &[DatasetOutput]) -> String {
        let mut out =
            String::from("dataset,delay,n_f,mode_pct,mean_pct,q68_lo_pct,q68_hi_pct,q95_lo_pct,q95_hi_pct\n");
        for d in datasets {
            if d.skipped.is_some() {
                continue;
            }
            for f in &d.fixed {
                let s = f.summary;
                out.push_str(&format!(
                    "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                    d.name,
                    f.dt,
                    f.n_f,
                    100.0 * s.mode,
                    100.0 * s.mean,
                    100.0 * s.q68.0,
                    100.0 * s.q68.1,
                    100.0 * s.q95.0,
                    100.0 * s.q95.1
                ));
            }
            if let Some(a) = &d.adaptive {
                let s = a.summary;
                out.push_str(&format!(
                    "{},adaptive({:.1}),{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                    d.name,
                    a.dt,
                    a.n_f,
                    100.0 * s.mode,
                    100.0 * s.mean,
                    100.0 * s.q68.0,
                    100.0 * s.q68.1,
                    100.0 * s.q95.0,
                    100.0 * s.q95.1
                ));
            }
        }
        out
    }

    pub fn combined_csv(rows: &[FusedRow]) -> String {
        let mut out =
            String::from("delay,strategy,mode_pct,mean_pct,q68_lo_pct,q68_hi_pct,q95_lo_pct,q95_hi_pct\n");
        for r in rows {
            let s = r.summary;
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                r.delay_tag,
                r.strategy,
                100.0 * s.mode,
                100.0 * s.mean,
                100.0 * s.q68.0,
                100.0 * s.q68.1,
                100.0 * s.q95.0,
                100.0 * s.q95.1
            ));
        }
        out
    }

    pub fn systematics_csv(datasets: &[DatasetOutput]) -> String {
        let mut out = String::from(
            "dataset,adaptive_dt,dt_ci68_lo,dt_ci68_hi,delta_gamma_pct,delta_lambda_pct,skipped\n",
        );
        for d in datasets {
            let (dt, lo, hi, dg) = match &d.adaptive {
                Some(a) => {
                    let (lo, hi) = a.dt_ci68.unwrap_or((f64::NAN, f64::NAN));
                    (
                        format!("{:.1}", a.dt),
                        format!("{lo:.1}"),
                        format!("{hi:.1}"),
                        format!("{:.3}", 100.0 * a.delta_gamma),
                    )
                }
                None => ("".into(), "".into(), "".into(), "".into()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{:.3},{}\n",
                d.name,
                dt,
                lo,
                hi,
                dg,
                100.0 * d.delta_lambda,
                d.skipped.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ifr_core::interval::{wilson_interval, Method};
    use ifr_core::series::SeriesKind;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn moving_average_constant_deaths() {
        let deaths = EpiSeries::new(
            date("2020-03-01"),
            vec![2.0; 60],
            SeriesKind::Deaths,
        )
        .unwrap();
        // cumulative ramps 2,4,6,...; any window average equals the
        // cumulative value at the window midpoint
        let a = moving_avg_deaths_fractional(&deaths, (date("2020-03-10"), date("2020-03-16")), 0.0)
            .unwrap();
        // F(t) = 2(t+1) on offsets 9..15, mean offset 12 -> 26
        assert!((a - 26.0).abs() < 1e-12);
        let b = moving_avg_deaths_fractional(&deaths, (date("2020-03-10"), date("2020-03-16")), 7.0)
            .unwrap();
        assert!((b - 40.0).abs() < 1e-12);
    }

    #[test]
    fn moving_average_linear_ramp_closed_form() {
        // daily deaths t -> cumulative t(t+1)/2; window mean has a
        // closed form
        let daily: Vec<f64> = (0..50).map(|t| t as f64).collect();
        let deaths = EpiSeries::new(date("2020-03-01"), daily, SeriesKind::Deaths).unwrap();
        let period = (date("2020-03-11"), date("2020-03-15"));
        let got = moving_avg_deaths_fractional(&deaths, period, 3.0).unwrap();
        // offsets 10..14 +3 -> 13..17, cumulative = t(t+1)/2
        let expect: f64 = (13..=17).map(|t| (t * (t + 1)) as f64 / 2.0).sum::<f64>() / 5.0;
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn moving_average_window_bounds_checked() {
        let deaths =
            EpiSeries::new(date("2020-03-01"), vec![1.0; 10], SeriesKind::Deaths).unwrap();
        assert!(
            moving_avg_deaths(&deaths, (date("2020-03-05"), date("2020-03-08")), 7.0).is_err()
        );
    }

    #[test]
    fn germany_extrapolation_reference_numbers() {
        let iv = wilson_interval(ifr_core::CountPair::new(7, 1892).unwrap(), 0.95).unwrap();
        let out = germany_extrapolation(&iv, 7.0 / 1892.0, 6575.0).unwrap();
        assert!((out.lower / 1e6 - 0.9).abs() < 0.05, "lower {}", out.lower);
        assert!((out.upper / 1e6 - 3.7).abs() < 0.05, "upper {}", out.upper);
        assert!((out.point / 1e6 - 1.8).abs() < 0.05, "point {}", out.point);
    }

    #[test]
    fn extrapolation_identity_and_unbounded() {
        let iv = IntervalEstimate {
            lower: 1.0,
            upper: 1.0,
            level: 0.95,
            point: 1.0,
            method: Method::Wilson,
            flags: Default::default(),
        };
        let out = germany_extrapolation(&iv, 1.0, 1234.0).unwrap();
        assert_eq!(out.point, 1234.0);
        let iv = IntervalEstimate {
            lower: 0.0,
            upper: 0.01,
            level: 0.95,
            point: 0.005,
            method: Method::Wilson,
            flags: Default::default(),
        };
        let out = germany_extrapolation(&iv, 0.005, 100.0).unwrap();
        assert!(out.upper_unbounded);
        assert!(out.upper.is_infinite());
    }
}
