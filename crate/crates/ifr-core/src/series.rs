//! Daily-resolution epidemic time series.

use chrono::NaiveDate;
use thiserror::Error;

/// What a series counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// Reported positive cases per day.
    Cases,
    /// Deaths per day.
    Deaths,
    /// Estimated new infections per day (deconvolution output).
    Infections,
}

/// A contiguous daily series of non-negative counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiSeries {
    pub start: NaiveDate,
    pub daily: Vec<f64>,
    pub kind: SeriesKind,
}

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("series must contain at least one day")]
    Empty,
    #[error("negative count {value} on day offset {offset}")]
    Negative { offset: usize, value: f64 },
    #[error("date {0} is outside the series range")]
    OutOfRange(NaiveDate),
}

impl EpiSeries {
    pub fn new(start: NaiveDate, daily: Vec<f64>, kind: SeriesKind) -> Result<Self, SeriesError> {
        if daily.is_empty() {
            return Err(SeriesError::Empty);
        }
        for (offset, &value) in daily.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(SeriesError::Negative { offset, value });
            }
        }
        Ok(Self { start, daily, kind })
    }

    pub fn len(&self) -> usize {
        self.daily.len()
    }

    pub fn is_empty(&self) -> bool {
        self.daily.is_empty()
    }

    pub fn end(&self) -> NaiveDate {
        self.start + chrono::Days::new(self.daily.len() as u64 - 1)
    }

    pub fn date_at(&self, offset: usize) -> NaiveDate {
        self.start + chrono::Days::new(offset as u64)
    }

    /// Day offset of a calendar date within the series.
    pub fn offset_of(&self, date: NaiveDate) -> Result<usize, SeriesError> {
        let delta = (date - self.start).num_days();
        if delta < 0 || delta as usize >= self.daily.len() {
            return Err(SeriesError::OutOfRange(date));
        }
        Ok(delta as usize)
    }

    /// Running cumulative sum of the daily counts.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.daily.len());
        let mut total = 0.0;
        for &v in &self.daily {
            total += v;
            out.push(total);
        }
        out
    }

    /// Linear interpolation of the daily values at a fractional offset;
    /// clamps beyond the ends.
    pub fn value_at(&self, offset: f64) -> f64 {
        interp_clamped(&self.daily, offset)
    }
}

/// Linear interpolation into a daily array at fractional index,
/// clamping outside the range.
pub fn interp_clamped(values: &[f64], idx: f64) -> f64 {
    if idx <= 0.0 {
        return values[0];
    }
    let max = (values.len() - 1) as f64;
    if idx >= max {
        return values[values.len() - 1];
    }
    let lo = idx.floor() as usize;
    let w = idx - lo as f64;
    values[lo] * (1.0 - w) + values[lo + 1] * w
}
