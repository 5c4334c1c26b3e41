//! CSV ingestion of daily epidemic time series.
//!
//! Expected layout: header `date,daily_cases,daily_deaths[,daily_tests]`
//! with ISO-8601 dates on a contiguous daily grid.

use crate::CliError;
use chrono::NaiveDate;
use ifr_core::series::{EpiSeries, SeriesKind};
use serde::Deserialize;
use std::path::Path;

/// The parsed series bundle for one region.
#[derive(Debug, Clone)]
pub struct SeriesBundle {
    pub cases: EpiSeries,
    pub deaths: EpiSeries,
    /// Daily test counts when the optional column is present.
    pub tests: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct Row {
    date: String,
    daily_cases: f64,
    daily_deaths: f64,
    #[serde(default)]
    daily_tests: Option<f64>,
}

/// Loads and validates a time-series CSV.
///
/// Gaps fail with the missing dates listed; negative counts and
/// malformed dates are rejected.
pub fn load_timeseries(path: &Path) -> Result<SeriesBundle, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path.display().to_string()))?;
    load_timeseries_str(&text, &path.display().to_string())
}

pub fn load_timeseries_str(text: &str, origin: &str) -> Result<SeriesBundle, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut cases: Vec<f64> = Vec::new();
    let mut deaths: Vec<f64> = Vec::new();
    let mut tests: Vec<f64> = Vec::new();
    let mut tests_seen = false;
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row: Row = row.map_err(|e| {
            CliError::Validation(format!("{origin}: row {}: {e}", i + 2))
        })?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|_| {
            CliError::Validation(format!(
                "{origin}: row {}: malformed date {:?} (expected YYYY-MM-DD)",
                i + 2,
                row.date
            ))
        })?;
        if row.daily_cases < 0.0 || row.daily_deaths < 0.0 {
            return Err(CliError::Validation(format!(
                "{origin}: negative count on {date}"
            )));
        }
        if let Some(t) = row.daily_tests {
            if t < 0.0 {
                return Err(CliError::Validation(format!(
                    "{origin}: negative test count on {date}"
                )));
            }
            tests.push(t);
            tests_seen = true;
        }
        dates.push(date);
        cases.push(row.daily_cases);
        deaths.push(row.daily_deaths);
    }
    if dates.is_empty() {
        return Err(CliError::Validation(format!("{origin}: no data rows")));
    }

    // Contiguity: report every missing day.
    let mut missing = Vec::new();
    for win in dates.windows(2) {
        let mut day = win[0] + chrono::Days::new(1);
        while day < win[1] {
            missing.push(day.to_string());
            day = day + chrono::Days::new(1);
        }
        if win[1] <= win[0] {
            return Err(CliError::Validation(format!(
                "{origin}: dates not strictly increasing at {}",
                win[1]
            )));
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Validation(format!(
            "{origin}: non-contiguous daily grid; missing {}",
            missing.join(", ")
        )));
    }
    if tests_seen && tests.len() != dates.len() {
        return Err(CliError::Validation(format!(
            "{origin}: daily_tests column must be present on every row or absent"
        )));
    }

    let start = dates[0];
    Ok(SeriesBundle {
        cases: EpiSeries::new(start, cases, SeriesKind::Cases)?,
        deaths: EpiSeries::new(start, deaths, SeriesKind::Deaths)?,
        tests: if tests_seen { Some(tests) } else { None },
    })
}

impl SeriesBundle {
    /// Optional per-day normalization of case counts by reported tests
    /// (counts become cases per mean-test volume).
    pub fn normalize_cases_by_tests(&mut self) -> Result<(), CliError> {
        let Some(tests) = &self.tests else {
            return Err(CliError::Validation(
                "test-rate normalization requested but no daily_tests column present".into(),
            ));
        };
        let mean_tests = tests.iter().sum::<f64>() / tests.len() as f64;
        let daily: Vec<f64> = self
            .cases
            .daily
            .iter()
            .zip(tests)
            .map(|(&c, &t)| if t > 0.0 { c * mean_tests / t } else { 0.0 })
            .collect();
        self.cases = EpiSeries::new(self.cases.start, daily, SeriesKind::Cases)?;
        Ok(())
    }
}
