//! Discretized one-dimensional probability densities on an explicit
//! support grid, shared by the Bayesian posteriors and the fusion
//! strategies.

use crate::interval::{IntervalEstimate, IntervalFlags, Method};
use thiserror::Error;

/// A 1-D density sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub mass: Vec<f64>,
    pub normalized: bool,
}

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("grid and mass lengths differ ({grid} vs {mass})")]
    LengthMismatch { grid: usize, mass: usize },
    #[error("grid must be strictly increasing (violation at index {0})")]
    NotIncreasing(usize),
    #[error("density values must be non-negative and finite (index {0})")]
    NegativeMass(usize),
    #[error("need at least {0} grid points")]
    TooFewPoints(usize),
    #[error("density integrates to zero; cannot normalize")]
    ZeroMass,
    #[error("grid does not cover the distribution mass; suggested bounds [{lo:.6e}, {hi:.6e}]")]
    GridTooNarrow { lo: f64, hi: f64 },
    #[error("density is (numerically) a point mass; operation undefined")]
    PointMass,
    #[error("csv parse failure: {0}")]
    Csv(String),
}

impl GridDensity {
    /// Validates grid/mass and wraps them unnormalized.
    pub fn new(grid: Vec<f64>, mass: Vec<f64>) -> Result<Self, DensityError> {
        if grid.len() != mass.len() {
            return Err(DensityError::LengthMismatch {
                grid: grid.len(),
                mass: mass.len(),
            });
        }
        if grid.len() < 4 {
            return Err(DensityError::TooFewPoints(4));
        }
        for i in 1..grid.len() {
            if grid[i] <= grid[i - 1] {
                return Err(DensityError::NotIncreasing(i));
            }
        }
        for (i, &m) in mass.iter().enumerate() {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(DensityError::NegativeMass(i));
            }
        }
        Ok(Self {
            grid,
            mass,
            normalized: false,
        })
    }

    /// Validated and normalized in one step.
    pub fn normalized(grid: Vec<f64>, mass: Vec<f64>) -> Result<Self, DensityError> {
        let mut d = Self::new(grid, mass)?;
        d.normalize()?;
        Ok(d)
    }

    /// Trapezoid integral of the density over its grid.
    pub fn integral(&self) -> f64 {
        let mut total = 0.0;
        for i in 1..self.grid.len() {
            total += 0.5 * (self.mass[i] + self.mass[i - 1]) * (self.grid[i] - self.grid[i - 1]);
        }
        total
    }

    /// Rescales to unit trapezoid integral.
    pub fn normalize(&mut self) -> Result<(), DensityError> {
        let z = self.integral();
        if z <= 0.0 || !z.is_finite() {
            return Err(DensityError::ZeroMass);
        }
        for m in &mut self.mass {
            *m /= z;
        }
        self.normalized = true;
        Ok(())
    }

    /// Peak density value.
    pub fn peak(&self) -> f64 {
        self.mass.iter().copied().fold(0.0, f64::max)
    }

    /// Location of the density mode.
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for i in 1..self.mass.len() {
            if self.mass[i] > self.mass[best] {
                best = i;
            }
        }
        self.grid[best]
    }

    /// Mean under the trapezoid rule.
    pub fn mean(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 1..self.grid.len() {
            let dx = self.grid[i] - self.grid[i - 1];
            num += 0.5 * (self.mass[i] * self.grid[i] + self.mass[i - 1] * self.grid[i - 1]) * dx;
            den += 0.5 * (self.mass[i] + self.mass[i - 1]) * dx;
        }
        num / den
    }

    /// Variance under the trapezoid rule.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 1..self.grid.len() {
            let dx = self.grid[i] - self.grid[i - 1];
            let a = self.mass[i] * (self.grid[i] - mu).powi(2);
            let b = self.mass[i - 1] * (self.grid[i - 1] - mu).powi(2);
            num += 0.5 * (a + b) * dx;
            den += 0.5 * (self.mass[i] + self.mass[i - 1]) * dx;
        }
        num / den
    }

    /// Cumulative distribution sampled on the grid (trapezoid rule),
    /// rescaled so the last value is exactly 1.
    pub fn cdf(&self) -> Vec<f64> {
        let mut cdf = vec![0.0; self.grid.len()];
        for i in 1..self.grid.len() {
            cdf[i] = cdf[i - 1]
                + 0.5 * (self.mass[i] + self.mass[i - 1]) * (self.grid[i] - self.grid[i - 1]);
        }
        let total = cdf[self.grid.len() - 1];
        if total > 0.0 {
            for c in &mut cdf {
                *c /= total;
            }
        }
        cdf
    }

    /// Quantile by monotone linear interpolation of the numeric CDF.
    pub fn quantile(&self, q: f64) -> f64 {
        let cdf = self.cdf();
        quantile_from_cdf(&self.grid, &cdf, q)
    }

    /// Checks the grid covers the mass: endpoint densities must be below
    /// `tail_ratio` times the peak.
    pub fn covers_mass(&self, tail_ratio: f64) -> bool {
        let peak = self.peak();
        if peak <= 0.0 {
            return false;
        }
        self.mass[0] <= tail_ratio * peak && self.mass[self.mass.len() - 1] <= tail_ratio * peak
    }

    /// Linear interpolation of the density at x (0 outside the grid).
    pub fn density_at(&self, x: f64) -> f64 {
        let n = self.grid.len();
        if x < self.grid[0] || x > self.grid[n - 1] {
            return 0.0;
        }
        match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => self.mass[i],
            Err(i) => {
                let (x0, x1) = (self.grid[i - 1], self.grid[i]);
                let w = (x - x0) / (x1 - x0);
                self.mass[i - 1] * (1.0 - w) + self.mass[i] * w
            }
        }
    }

    /// Serializes as two-column CSV `x,density` with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,density\n");
        for (x, m) in self.grid.iter().zip(&self.mass) {
            out.push_str(&format!("{x:.12e},{m:.12e}\n"));
        }
        out
    }

    /// Parses the two-column CSV written by [`GridDensity::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, DensityError> {
        let mut grid = Vec::new();
        let mut mass = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('x')) {
                continue;
            }
            let mut parts = line.split(',');
            let x = parts
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| DensityError::Csv(format!("line {}: bad x", lineno + 1)))?;
            let m = parts
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| DensityError::Csv(format!("line {}: bad density", lineno + 1)))?;
            grid.push(x);
            mass.push(m);
        }
        let mut d = Self::new(grid, mass)?;
        d.normalize()?;
        Ok(d)
    }
}

/// Inverse CDF by linear interpolation on tabulated (grid, cdf) values.
pub fn quantile_from_cdf(grid: &[f64], cdf: &[f64], q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    if q <= cdf[0] {
        return grid[0];
    }
    let n = cdf.len();
    if q >= cdf[n - 1] {
        return grid[n - 1];
    }
    // first index with cdf >= q
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if cdf[mid] < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (c0, c1) = (cdf[lo], cdf[hi]);
    if c1 <= c0 {
        return grid[hi];
    }
    let w = (q - c0) / (c1 - c0);
    grid[lo] * (1.0 - w) + grid[hi] * w
}

/// Equal-tailed credible interval with alpha/2 mass in each tail; the
/// interval's point field carries the density mode.
pub fn credible_interval(d: &GridDensity, level: f64) -> IntervalEstimate {
    let alpha = 1.0 - level;
    let cdf = d.cdf();
    IntervalEstimate {
        lower: quantile_from_cdf(&d.grid, &cdf, alpha / 2.0),
        upper: quantile_from_cdf(&d.grid, &cdf, 1.0 - alpha / 2.0),
        level,
        point: d.mode(),
        method: Method::Credible,
        flags: IntervalFlags::default(),
    }
}

/// Log-spaced grid between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && points >= 2);
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Uniformly spaced grid between `lo` and `hi`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(hi > lo && points >= 2);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}
