//! Statistical machinery for estimating an infection fatality rate (IFR)
//! as a ratio of two binomial proportions.
//!
//! The crate is organized around the analysis chain:
//!
//! * [`interval`] — single binomial proportion confidence intervals and the
//!   Monte Carlo Neyman belt construction ([`belt`]).
//! * [`ratio`] — confidence intervals for the ratio of two independent
//!   binomial proportions (conditional, transform, bootstrap, profile LLR).
//! * [`bayes`] — beta-binomial posteriors, the numeric ratio posterior and
//!   its nuisance-scale "dressing", credible intervals.
//! * [`bernoulli`] — correlated 3-dimensional Bernoulli population
//!   simulation over tested/infected/fatal categories.
//! * [`timeflow`] — delay-kernel calculus: Weibull kernels, convolution,
//!   regularized non-negative deconvolution, the double-delay correction
//!   `psi(t, dt)` and its uncertainty.
//! * [`testerr`] — diagnostic test type I/II error inversion and the
//!   systematic scale uncertainty it induces.
//! * [`fusion`] — multi-study combination strategies.

pub mod bayes;
pub mod belt;
pub mod bernoulli;
pub mod density;
pub mod fusion;
pub mod interval;
pub mod ratio;
pub mod rng;
pub mod series;
pub mod special;
pub mod testerr;
pub mod timeflow;

pub use density::GridDensity;
pub use interval::{CountPair, IntervalEstimate, Method};
pub use ratio::RatioCounts;
pub use series::EpiSeries;
