//! Study configuration: JSON schema for the multi-study pipeline and
//! the TOML kernel configuration.

use crate::CliError;
use chrono::NaiveDate;
use ifr_core::bayes::{BetaParams, ScaleFamily};
use ifr_core::testerr::TestCharacteristics;
use ifr_core::timeflow::{DelayKernel, KernelSet};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Top-level pipeline configuration document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub global: GlobalConfig,
    pub datasets: Vec<DatasetConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalConfig {
    pub test_sensitivity: f64,
    pub test_sensitivity_unc: f64,
    pub test_specificity: f64,
    pub test_specificity_unc: f64,
    /// Path to the kernel TOML, relative to the config file.
    pub kernel_config: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_prior")]
    pub prior: PriorChoice,
    #[serde(default = "default_scale_family")]
    pub scale_family: ScaleFamilyChoice,
    #[serde(default = "default_fixed_delays")]
    pub fixed_delays: Vec<u64>,
    /// Monte Carlo replicates for the delay-uncertainty propagation.
    #[serde(default = "default_unc_replicates")]
    pub uncertainty_replicates: u64,
}

fn default_grid_points() -> usize {
    4096
}

fn default_prior() -> PriorChoice {
    PriorChoice::Jeffreys
}

fn default_scale_family() -> ScaleFamilyChoice {
    ScaleFamilyChoice::Gamma
}

fn default_fixed_delays() -> Vec<u64> {
    vec![0, 7, 14, 21]
}

fn default_unc_replicates() -> u64 {
    200
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum PriorChoice {
    Flat,
    Jeffreys,
}

impl PriorChoice {
    pub fn params(self) -> BetaParams {
        match self {
            PriorChoice::Flat => BetaParams::flat(),
            PriorChoice::Jeffreys => BetaParams::jeffreys(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ScaleFamilyChoice {
    Normal,
    Gamma,
}

impl From<ScaleFamilyChoice> for ScaleFamily {
    fn from(c: ScaleFamilyChoice) -> Self {
        match c {
            ScaleFamilyChoice::Normal => ScaleFamily::Normal,
            ScaleFamilyChoice::Gamma => ScaleFamily::Gamma,
        }
    }
}

/// One study's inputs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub population: u64,
    pub tests: u64,
    /// Corrected positive count (set `positives_raw = true` when the
    /// count still carries test errors and must be inverted first).
    pub positives: u64,
    #[serde(default)]
    pub positives_raw: bool,
    /// Prevalence test period [start, end], inclusive.
    pub test_period: (NaiveDate, NaiveDate),
    /// Daily time-series CSV path, relative to the config file.
    #[serde(default)]
    pub timeseries: Option<String>,
    /// Death counts per fixed read-out delay for series-less studies.
    #[serde(default)]
    pub deaths_by_delay: Option<BTreeMap<u64, u64>>,
    /// Adaptive read-out delay override for series-less studies (days).
    #[serde(default)]
    pub fixed_delay: Option<f64>,
    /// Death count at the fixed adaptive delay.
    #[serde(default)]
    pub deaths_at_fixed_delay: Option<u64>,
    /// Local test characteristics overriding the global values.
    #[serde(default)]
    pub test_sensitivity: Option<f64>,
    #[serde(default)]
    pub test_sensitivity_unc: Option<f64>,
    #[serde(default)]
    pub test_specificity: Option<f64>,
    #[serde(default)]
    pub test_specificity_unc: Option<f64>,
    /// Normalize case counts by the daily_tests column before
    /// deconvolution.
    #[serde(default)]
    pub normalize_by_tests: bool,
}

impl StudyConfig {
    pub fn from_path(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text =
            std::fs::read_to_string(path).map_err(CliError::io(path.display().to_string()))?;
        let cfg: StudyConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for d in &self.datasets {
            if d.test_period.0 > d.test_period.1 {
                return Err(CliError::Validation(format!(
                    "{}: test period start after end",
                    d.name
                )));
            }
            if d.positives > d.tests {
                return Err(CliError::Validation(format!(
                    "{}: positives exceed tests",
                    d.name
                )));
            }
            if d.timeseries.is_none() && d.deaths_by_delay.is_none() {
                return Err(CliError::Validation(format!(
                    "{}: needs a timeseries or deaths_by_delay",
                    d.name
                )));
            }
        }
        Ok(())
    }

    /// Resolved test characteristics for a dataset (local overrides on
    /// top of the global values).
    pub fn characteristics(&self, d: &DatasetConfig) -> Result<TestCharacteristics, CliError> {
        Ok(TestCharacteristics::new(
            d.test_sensitivity.unwrap_or(self.global.test_sensitivity),
            d.test_specificity.unwrap_or(self.global.test_specificity),
            d.test_sensitivity_unc
                .unwrap_or(self.global.test_sensitivity_unc),
            d.test_specificity_unc
                .unwrap_or(self.global.test_specificity_unc),
        )?)
    }
}

/// TOML kernel configuration: component delays with relative parameter
/// uncertainties.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfigFile {
    /// Kernel truncation horizon in days.
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    pub kernels: Vec<KernelEntry>,
}

fn default_t_max() -> usize {
    60
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub label: String,
    pub scale: f64,
    pub shape: f64,
    pub scale_unc_rel: f64,
    pub shape_unc_rel: f64,
}

/// The kernel set plus the per-kernel relative uncertainties from the
/// config file.
#[derive(Debug, Clone)]
pub struct LoadedKernels {
    pub set: KernelSet,
    pub uncertainty: ifr_core::timeflow::KernelUncertainty,
    pub t_max: usize,
}

pub fn load_kernels(path: &Path) -> Result<LoadedKernels, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path.display().to_string()))?;
    load_kernels_str(&text, &path.display().to_string())
}

pub fn load_kernels_str(text: &str, origin: &str) -> Result<LoadedKernels, CliError> {
    let cfg: KernelConfigFile =
        toml::from_str(text).map_err(|e| CliError::Validation(format!("{origin}: {e}")))?;
    let find = |label: &str| -> Result<&KernelEntry, CliError> {
        cfg.kernels
            .iter()
            .find(|k| k.label == label)
            .ok_or_else(|| CliError::Validation(format!("{origin}: missing kernel {label}")))
    };
    let build = |e: &KernelEntry| -> Result<DelayKernel, CliError> {
        Ok(DelayKernel::weibull(e.scale, e.shape, cfg.t_max, e.label.clone())?)
    };
    let i_to_o = find("I>O")?.clone();
    let o_to_c = find("O>C")?.clone();
    let o_to_s = find("O>S")?.clone();
    let c_to_f = find("C>F")?.clone();
    Ok(LoadedKernels {
        set: KernelSet {
            i_to_o: build(&i_to_o)?,
            o_to_c: build(&o_to_c)?,
            o_to_s: build(&o_to_s)?,
            c_to_f: build(&c_to_f)?,
        },
        uncertainty: ifr_core::timeflow::KernelUncertainty {
            i_to_o: (i_to_o.scale_unc_rel, i_to_o.shape_unc_rel),
            o_to_c: (o_to_c.scale_unc_rel, o_to_c.shape_unc_rel),
            o_to_s: (o_to_s.scale_unc_rel, o_to_s.shape_unc_rel),
            c_to_f: (c_to_f.scale_unc_rel, c_to_f.shape_unc_rel),
        },
        t_max: cfg.t_max,
    })
}
