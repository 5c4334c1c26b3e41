//! Subcommand implementations behind the `ifr` binary.

use crate::config::{load_kernels, StudyConfig};
use crate::coverage::{coverage_simulation, default_p_grid, CoverageEstimator, CoverageMode};
use crate::pipeline::{run_pipeline, tables};
use crate::timeseries::load_timeseries;
use crate::CliError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ifr_core::bayes::{
    dressed_ratio_posterior, BetaParams, RatioGridSpec, ScalePrior,
};
use ifr_core::belt::{build_neyman_belt, invert_belt, BeltConfig, BeltOrdering};
use ifr_core::bernoulli::{max_coupling, run_population_sim, PopulationSimConfig};
use ifr_core::density::credible_interval;
use ifr_core::fusion::{
    joint_llr_combine, mean_of_posteriors, mom_combine, nl_fit, ot_barycenter,
    product_of_posteriors, StudyEstimate,
};
use ifr_core::interval::{
    clopper_pearson_interval, llr_interval_asymptotic, midp_interval, wald_interval,
    wilson_interval, CountPair, IntervalEstimate,
};
use ifr_core::ratio::{
    asinh_ratio_interval, bootstrap_ratio_interval, conditional_ratio_interval,
    katz_log_interval, profile_llr_interval, BootstrapConfig, BootstrapVariant, ConditionalBase,
    RatioCounts,
};
use ifr_core::timeflow::{deconvolve, select_lambda, DeconvConfig};
use ifr_core::GridDensity;
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ifr", about = "Binomial-ratio rate estimation toolkit", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Global random seed.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Confidence / credibility level.
    #[arg(long, global = true, default_value_t = 0.95)]
    pub level: f64,
    /// Output format for machine-readable results.
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Text)]
    pub out: OutFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
pub enum Command {
    /// Single binomial proportion interval.
    Interval(IntervalArgs),
    /// Two-binomial ratio interval.
    Ratio(RatioArgs),
    /// Bayesian ratio posterior density export.
    Posterior(PosteriorArgs),
    /// Correlated Bernoulli population simulation.
    Simulate(SimulateArgs),
    /// Regularized deconvolution of a daily case series.
    Deconv(DeconvArgs),
    /// Combine study results or densities.
    Combine(CombineArgs),
    /// Full multi-study pipeline from a config file.
    Pipeline(PipelineArgs),
    /// Interval estimator coverage simulation.
    Coverage(CoverageArgs),
}

#[derive(Args)]
pub struct IntervalArgs {
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub k: u64,
    #[arg(long)]
    pub n: u64,
    /// Neyman belt Monte Carlo samples per grid point (belt method).
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: u64,
    /// Belt parameter range, e.g. 0,0.02 (belt method).
    #[arg(long)]
    pub range: Option<String>,
    #[arg(long, default_value_t = 2000)]
    pub grid_size: usize,
}

#[derive(Args)]
pub struct RatioArgs {
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub k1: u64,
    #[arg(long)]
    pub n1: u64,
    #[arg(long)]
    pub k2: u64,
    #[arg(long)]
    pub n2: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub replicates: u64,
    /// Replace zero cells by k + 1/2 in the transform methods.
    #[arg(long, default_value_t = false)]
    pub continuity_correction: bool,
}

#[derive(Args)]
pub struct PosteriorArgs {
    #[arg(long)]
    pub k1: u64,
    #[arg(long)]
    pub n1: u64,
    #[arg(long)]
    pub k2: u64,
    #[arg(long)]
    pub n2: u64,
    /// Prior: jeffreys, flat or "alpha,beta".
    #[arg(long, default_value = "jeffreys")]
    pub prior: String,
    /// Relative scale uncertainty on k1 (delay systematics).
    #[arg(long, default_value_t = 0.0)]
    pub delta_gamma: f64,
    /// Relative scale uncertainty on k2 (test-error systematics).
    #[arg(long, default_value_t = 0.0)]
    pub delta_lambda: f64,
    /// Scale prior family: normal or gamma.
    #[arg(long, default_value = "gamma")]
    pub family: String,
    /// Write the density CSV here.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 4096)]
    pub grid_points: usize,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 12597)]
    pub population: u64,
    #[arg(long, default_value_t = 919)]
    pub test_sample: u64,
    #[arg(long)]
    pub mean_t: Option<f64>,
    #[arg(long, default_value_t = 138.0 / 919.0)]
    pub mean_i: f64,
    #[arg(long, default_value_t = 7.0 / 12597.0)]
    pub mean_f: f64,
    /// Correlation of infection and fatality coins; "max" for the
    /// maximum coupling.
    #[arg(long, default_value = "max")]
    pub rho: String,
    #[arg(long, default_value_t = 100_000)]
    pub n_mc: u64,
    #[arg(long, default_value_t = false)]
    pub fluctuate_tests: bool,
    /// Write the 8-column category count matrix CSV here.
    #[arg(long)]
    pub matrix_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DeconvArgs {
    /// Daily time-series CSV (date,daily_cases,daily_deaths).
    #[arg(long)]
    pub input: PathBuf,
    /// Kernel TOML configuration.
    #[arg(long)]
    pub kernels: PathBuf,
    /// Which combined kernel to invert: kc, ks or kf.
    #[arg(long, default_value = "kc")]
    pub kernel: String,
    /// Regularization strength, or "auto" for the smallest smooth
    /// solution.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    /// Write the inferred daily infection series CSV here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct CombineArgs {
    /// mom | nl | ot | sum | prod | llr
    #[arg(long)]
    pub strategy: String,
    /// Density CSV files (x,density) for ot/sum/prod; "r,se" pairs are
    /// derived from them for mom/nl.
    #[arg(long, num_args = 1.., value_delimiter = ' ')]
    pub inputs: Vec<PathBuf>,
    /// Count datasets k1,n1,k2,n2 for the llr strategy.
    #[arg(long, num_args = 0.., value_delimiter = ' ')]
    pub counts: Vec<String>,
    /// uniform | invvar
    #[arg(long, default_value = "uniform")]
    pub weights: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub outdir: PathBuf,
}

#[derive(Args)]
pub struct CoverageArgs {
    #[arg(long)]
    pub estimator: String,
    #[arg(long)]
    pub n: u64,
    /// exact | mc
    #[arg(long, default_value = "exact")]
    pub mode: String,
    #[arg(long, default_value_t = 10_000)]
    pub mc_samples: u64,
    /// Rate grid as lo,hi,step; default 0.001,0.999,0.001.
    #[arg(long)]
    pub p_grid: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn pct(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{:.2}%", 100.0 * x)
    }
}

fn print_interval(cli: &Cli, iv: &IntervalEstimate) {
    match cli.out {
        OutFormat::Text => {
            println!("[{}, {}]", pct(iv.lower), pct(iv.upper));
        }
        OutFormat::Csv => {
            println!("method,level,point,lower,upper");
            println!(
                "{},{},{:.6e},{:.6e},{:.6e}",
                iv.method, iv.level, iv.point, iv.lower, iv.upper
            );
        }
        OutFormat::Json => {
            println!(
                "{{\"method\":\"{}\",\"level\":{},\"point\":{:.6e},\"lower\":{:.6e},\"upper\":{:.6e}}}",
                iv.method, iv.level, iv.point, iv.lower, iv.upper
            );
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Interval(args) => run_interval(cli, args),
        Command::Ratio(args) => run_ratio(cli, args),
        Command::Posterior(args) => run_posterior(cli, args),
        Command::Simulate(args) => run_simulate(cli, args),
        Command::Deconv(args) => run_deconv(cli, args),
        Command::Combine(args) => run_combine(cli, args),
        Command::Pipeline(args) => run_pipeline_cmd(cli, args),
        Command::Coverage(args) => run_coverage(cli, args),
    }
}

fn run_interval(cli: &Cli, args: &IntervalArgs) -> Result<(), CliError> {
    let c = CountPair::new(args.k, args.n)?;
    let iv = match args.method.as_str() {
        "wald" => wald_interval(c, cli.level)?,
        "wilson" => wilson_interval(c, cli.level)?,
        "clopper-pearson" | "cp" => clopper_pearson_interval(c, cli.level)?,
        "mid-p" | "midp" => midp_interval(c, cli.level)?,
        "llr" => llr_interval_asymptotic(c, cli.level)?,
        "belt" => {
            let mut cfg = BeltConfig::new(args.n, cli.level, BeltOrdering::LlrExact)
                .with_mc_samples(args.mc_samples)
                .with_grid_size(args.grid_size)
                .with_seed(cli.seed);
            if let Some(range) = &args.range {
                let (lo, hi) = parse_pair(range)?;
                cfg = cfg.with_range(lo, hi);
            }
            let belt = build_neyman_belt(&cfg)?;
            invert_belt(&belt, args.k)?
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown interval method {other}"
            )))
        }
    };
    print_interval(cli, &iv);
    Ok(())
}

fn parse_pair(s: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::Validation(format!("expected lo,hi, got {s}")));
    }
    let lo = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::Validation(format!("bad number {}", parts[0])))?;
    let hi = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::Validation(format!("bad number {}", parts[1])))?;
    Ok((lo, hi))
}

fn run_ratio(cli: &Cli, args: &RatioArgs) -> Result<(), CliError> {
    let c = RatioCounts::new(args.k1, args.n1, args.k2, args.n2)?;
    let iv = match args.method.as_str() {
        "conditional-cp" => {
            conditional_ratio_interval(c, cli.level, ConditionalBase::ClopperPearson)?
        }
        "conditional-mid-p" | "conditional-midp" => {
            conditional_ratio_interval(c, cli.level, ConditionalBase::MidP)?
        }
        "katz" => katz_log_interval(c, cli.level, args.continuity_correction)?,
        "asinh" => asinh_ratio_interval(c, cli.level, args.continuity_correction)?,
        "profile" | "profile-llr" => profile_llr_interval(c, cli.level)?,
        m @ ("bootstrap-prc" | "bootstrap-bc" | "bootstrap-bca") => {
            let variant = match m {
                "bootstrap-prc" => BootstrapVariant::Prc,
                "bootstrap-bc" => BootstrapVariant::Bc,
                _ => BootstrapVariant::Bca,
            };
            let cfg = BootstrapConfig::new(args.replicates, variant, cli.seed)?;
            let out = bootstrap_ratio_interval(c, cli.level, cfg)?;
            if out.discarded > 0 {
                eprintln!("note: {} degenerate resamples discarded", out.discarded);
            }
            out.interval
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown ratio method {other}"
            )))
        }
    };
    print_interval(cli, &iv);
    Ok(())
}

fn parse_prior(s: &str) -> Result<BetaParams, CliError> {
    match s {
        "jeffreys" => Ok(BetaParams::jeffreys()),
        "flat" => Ok(BetaParams::flat()),
        other => {
            let (a, b) = parse_pair(other)?;
            Ok(BetaParams::new(a, b)?)
        }
    }
}

fn run_posterior(cli: &Cli, args: &PosteriorArgs) -> Result<(), CliError> {
    let c = RatioCounts::new(args.k1, args.n1, args.k2, args.n2)?;
    let prior = parse_prior(&args.prior)?;
    let make = |sigma: f64| -> Result<ScalePrior, CliError> {
        if sigma == 0.0 {
            return Ok(ScalePrior::unit());
        }
        Ok(match args.family.as_str() {
            "normal" => ScalePrior::normal(1.0, sigma)?,
            "gamma" => ScalePrior::gamma(1.0, sigma)?,
            other => {
                return Err(CliError::Validation(format!(
                    "unknown scale family {other}"
                )))
            }
        })
    };
    let spec = RatioGridSpec {
        points: args.grid_points,
        bounds: None,
    };
    let (density, diag) = dressed_ratio_posterior(
        c,
        prior,
        prior,
        make(args.delta_gamma)?,
        make(args.delta_lambda)?,
        spec,
    )?;
    for w in &diag.warnings {
        eprintln!("warning: {w}");
    }
    let cr = credible_interval(&density, cli.level);
    println!(
        "mode {} mean {} CR{:.0} [{}, {}]",
        pct(density.mode()),
        pct(density.mean()),
        100.0 * cli.level,
        pct(cr.lower),
        pct(cr.upper)
    );
    if let Some(path) = &args.output {
        std::fs::write(path, density.to_csv())
            .map_err(CliError::io(path.display().to_string()))?;
    }
    Ok(())
}

fn run_simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), CliError> {
    let rho = match args.rho.as_str() {
        "max" => max_coupling(args.mean_i, args.mean_f)?,
        other => other
            .parse()
            .map_err(|_| CliError::Validation(format!("bad rho {other}")))?,
    };
    let cfg = PopulationSimConfig {
        n_p: args.population,
        n_t: args.test_sample,
        mean_t: args
            .mean_t
            .unwrap_or(args.test_sample as f64 / args.population as f64),
        mean_i: args.mean_i,
        mean_f: args.mean_f,
        rho_if: rho,
        n_mc: args.n_mc,
        seed: cli.seed,
        fluctuate_test_count: args.fluctuate_tests,
    };
    let result = run_population_sim(&cfg)?;
    println!("category,mean,q68_lo,q68_hi,q95_lo,q95_hi");
    for cat in 0..8 {
        println!(
            "{:03b},{:.2},{},{},{},{}",
            cat,
            result.stats.means[cat],
            result.stats.q68[cat].0,
            result.stats.q68[cat].1,
            result.stats.q95[cat].0,
            result.stats.q95[cat].1
        );
    }
    if let Some(path) = &args.matrix_out {
        let mut file =
            std::fs::File::create(path).map_err(CliError::io(path.display().to_string()))?;
        writeln!(file, "c000,c001,c010,c011,c100,c101,c110,c111")
            .map_err(CliError::io(path.display().to_string()))?;
        for row in &result.matrix {
            writeln!(
                file,
                "{},{},{},{},{},{},{},{}",
                row[0], row[1], row[2], row[3], row[4], row[5], row[6], row[7]
            )
            .map_err(CliError::io(path.display().to_string()))?;
        }
    }
    Ok(())
}

fn run_deconv(_cli: &Cli, args: &DeconvArgs) -> Result<(), CliError> {
    let bundle = load_timeseries(&args.input)?;
    let kernels = load_kernels(&args.kernels)?;
    let kernel = match args.kernel.as_str() {
        "kc" => kernels.set.k_c(),
        "ks" => kernels.set.k_s(),
        "kf" => kernels.set.k_f(),
        other => {
            return Err(CliError::Validation(format!(
                "unknown kernel {other}; expected kc|ks|kf"
            )))
        }
    };
    let base = DeconvConfig::new(0.0, kernel.support_len());
    let result = match args.lambda.as_str() {
        "auto" => {
            let ladder = [0.0, 0.01, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0, 500.0];
            let (lambda, x) = select_lambda(&bundle.cases, &kernel, &base, &ladder)?;
            eprintln!("selected lambda_r = {lambda}");
            x
        }
        s => {
            let lambda: f64 = s
                .parse()
                .map_err(|_| CliError::Validation(format!("bad lambda {s}")))?;
            deconvolve(
                &bundle.cases,
                &kernel,
                &DeconvConfig {
                    lambda_r: lambda,
                    ..base
                },
            )?
        }
    };
    let mut out = String::from("date,daily_infections\n");
    for (i, v) in result.daily.iter().enumerate() {
        out.push_str(&format!("{},{v:.6}\n", result.date_at(i)));
    }
    match &args.output {
        Some(path) => std::fs::write(path, out)
            .map_err(CliError::io(path.display().to_string()))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn run_combine(cli: &Cli, args: &CombineArgs) -> Result<(), CliError> {
    if args.strategy == "llr" {
        let mut counts = Vec::new();
        for spec in &args.counts {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 4 {
                return Err(CliError::Validation(format!(
                    "expected k1,n1,k2,n2, got {spec}"
                )));
            }
            let nums: Vec<u64> = parts
                .iter()
                .map(|p| p.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Validation(format!("bad counts {spec}")))?;
            counts.push(RatioCounts::new(nums[0], nums[1], nums[2], nums[3])?);
        }
        if counts.is_empty() {
            return Err(CliError::Validation(
                "llr strategy needs --counts entries".into(),
            ));
        }
        let fit = joint_llr_combine(&counts, cli.level)?;
        if fit.compatibility_warning {
            eprintln!("warning: some datasets have disjoint single-study intervals");
        }
        println!(
            "r {} CI{:.0} [{}, {}]",
            pct(fit.r_hat),
            100.0 * cli.level,
            pct(fit.interval.lower),
            pct(fit.interval.upper)
        );
        return Ok(());
    }

    let mut densities = Vec::new();
    for path in &args.inputs {
        let text =
            std::fs::read_to_string(path).map_err(CliError::io(path.display().to_string()))?;
        densities.push(GridDensity::from_csv(&text)?);
    }
    if densities.is_empty() {
        return Err(CliError::Validation("no input densities".into()));
    }
    let refs: Vec<&GridDensity> = densities.iter().collect();
    let weights: Vec<f64> = match args.weights.as_str() {
        "uniform" => Vec::new(),
        "invvar" => refs.iter().map(|d| 1.0 / d.variance()).collect(),
        other => return Err(CliError::Validation(format!("unknown weights {other}"))),
    };

    let (summary_density, label): (GridDensity, &str) = match args.strategy.as_str() {
        "ot" => (ot_barycenter(&refs, &weights)?.density, "ot"),
        "sum" => (mean_of_posteriors(&refs, &weights)?.density, "sum"),
        "prod" => (product_of_posteriors(&refs, &weights)?.density, "prod"),
        "mom" | "nl" => {
            let estimates: Vec<StudyEstimate> = refs
                .iter()
                .map(|d| {
                    let cr = credible_interval(d, 0.6827);
                    StudyEstimate::new(d.mean(), 0.5 * cr.width())
                })
                .collect::<Result<_, _>>()?;
            let fit = if args.strategy == "mom" {
                mom_combine(&estimates)?
            } else {
                nl_fit(&estimates)?
            };
            println!(
                "r {} +- {} (heterogeneity sd {})",
                pct(fit.r_hat),
                pct(fit.se_r),
                pct(fit.delta_sq.sqrt())
            );
            let g = fit.gaussian_interval(cli.level, ifr_core::interval::Method::MomGaussian);
            println!(
                "Q{:.0} [{}, {}]",
                100.0 * cli.level,
                pct(g.lower),
                pct(g.upper)
            );
            return Ok(());
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown strategy {other}"
            )))
        }
    };
    let cr = credible_interval(&summary_density, cli.level);
    println!(
        "{label}: mode {} mean {} Q{:.0} [{}, {}]",
        pct(summary_density.mode()),
        pct(summary_density.mean()),
        100.0 * cli.level,
        pct(cr.lower),
        pct(cr.upper)
    );
    if let Some(path) = &args.output {
        std::fs::write(path, summary_density.to_csv())
            .map_err(CliError::io(path.display().to_string()))?;
    }
    Ok(())
}

fn run_pipeline_cmd(cli: &Cli, args: &PipelineArgs) -> Result<(), CliError> {
    let (mut cfg, base) = StudyConfig::from_path(&args.config)?;
    if cli.seed != 1 {
        cfg.global.seed = cli.seed;
    }
    let kernels = load_kernels(&base.join(&cfg.global.kernel_config))?;
    let output = run_pipeline(&cfg, &kernels, &base)?;

    std::fs::create_dir_all(&args.outdir)
        .map_err(CliError::io(args.outdir.display().to_string()))?;
    let write = |name: &str, text: String| -> Result<(), CliError> {
        let path = args.outdir.join(name);
        std::fs::write(&path, text).map_err(CliError::io(path.display().to_string()))
    };
    write("per_dataset.csv", tables::per_dataset_csv(&output.datasets))?;
    write("combined.csv", tables::combined_csv(&output.fused))?;
    write("systematics.csv", tables::systematics_csv(&output.datasets))?;

    let dens_dir = args.outdir.join("posteriors");
    std::fs::create_dir_all(&dens_dir)
        .map_err(CliError::io(dens_dir.display().to_string()))?;
    for d in &output.datasets {
        for f in &d.fixed {
            let path = dens_dir.join(format!("{}_dt{}.csv", d.name, f.dt));
            std::fs::write(&path, f.density.to_csv())
                .map_err(CliError::io(path.display().to_string()))?;
        }
        if let Some(a) = &d.adaptive {
            let path = dens_dir.join(format!("{}_adaptive.csv", d.name));
            std::fs::write(&path, a.density.to_csv())
                .map_err(CliError::io(path.display().to_string()))?;
        }
        for w in &d.warnings {
            eprintln!("{}: {w}", d.name);
        }
        if let Some(reason) = &d.skipped {
            eprintln!("{} skipped: {reason}", d.name);
        }
    }
    println!("wrote results to {}", args.outdir.display());
    Ok(())
}

fn run_coverage(cli: &Cli, args: &CoverageArgs) -> Result<(), CliError> {
    let estimator: CoverageEstimator = args
        .estimator
        .parse()
        .map_err(CliError::Validation)?;
    let mode: CoverageMode = args.mode.parse().map_err(CliError::Validation)?;
    let grid = match &args.p_grid {
        None => default_p_grid(),
        Some(spec) => {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 3 {
                return Err(CliError::Validation(format!(
                    "expected lo,hi,step, got {spec}"
                )));
            }
            let nums: Vec<f64> = parts
                .iter()
                .map(|p| p.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Validation(format!("bad grid {spec}")))?;
            let mut grid = Vec::new();
            let mut p = nums[0];
            while p <= nums[1] + 1e-12 {
                grid.push(p);
                p += nums[2];
            }
            grid
        }
    };
    let report = coverage_simulation(
        estimator,
        args.n,
        &grid,
        cli.level,
        mode,
        args.mc_samples,
        cli.seed,
    )?;
    match &args.output {
        Some(path) => std::fs::write(path, report.to_csv())
            .map_err(CliError::io(path.display().to_string()))?,
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}
