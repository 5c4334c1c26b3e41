//! Study configuration, data ingestion, the end-to-end estimation
//! pipeline and the coverage simulation harness behind the `ifr`
//! binary.

pub mod commands;
pub mod config;
pub mod coverage;
pub mod pipeline;
pub mod timeseries;

use thiserror::Error;

/// Process exit codes: 2 for input/validation problems, 3 for numeric
/// failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numeric(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

macro_rules! validation_from {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Validation(e.to_string())
            }
        })*
    };
}

macro_rules! numeric_from {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Numeric(e.to_string())
            }
        })*
    };
}

validation_from!(
    ifr_core::interval::IntervalError,
    ifr_core::series::SeriesError,
    ifr_core::testerr::TestErrError,
    ifr_core::bernoulli::SimError
);

numeric_from!(
    ifr_core::ratio::RatioError,
    ifr_core::bayes::BayesError,
    ifr_core::belt::BeltError,
    ifr_core::density::DensityError,
    ifr_core::fusion::FusionError,
    ifr_core::timeflow::TimeflowError
);
