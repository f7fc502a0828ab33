//! Saturation arithmetic: the ITS ratio, least-squares fits of cumulative
//! curves, the mean squared gap between two fits, and cross-run CoV.
//!
//! Regression x values are zero-based interview indices. CoV uses the sample
//! (n - 1) standard deviation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unique over total codes. Stored at full precision; use [`round2`] for display.
pub fn its_ratio(unique: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::Input("ITS needs at least one code".into()));
    }
    if unique == 0 || unique > total {
        return Err(Error::Input(format!("unique count {unique} is not within 1..={total}")));
    }
    Ok(unique as f64 / total as f64)
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub n_points: usize,
}

impl LinearFit {
    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares over (x, y) points.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::Input("a fit needs at least two points".into()));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("all x values are equal".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    Ok(LinearFit { slope, intercept: mean_y - slope * mean_x, n_points: points.len() })
}

/// Fit of a cumulative count series indexed from x = 0.
pub fn fit_cumulative(counts: &[usize]) -> Result<LinearFit> {
    let pts: Vec<(f64, f64)> = counts.iter().enumerate().map(|(i, &c)| (i as f64, c as f64)).collect();
    linear_fit(&pts)
}

/// Mean over x in 0..n of the squared difference between two fitted lines.
pub fn mse_between_fits(a: &LinearFit, b: &LinearFit, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Input("need at least one point".into()));
    }
    let sum: f64 = (0..n).map(|x| (a.at(x as f64) - b.at(x as f64)).powi(2)).sum();
    Ok(sum / n as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

/// Coefficient of variation in percent: 100 * sample SD / mean.
pub fn cov_percent(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Input("CoV needs at least two values".into()));
    }
    let m = mean(values);
    if m <= 0.0 {
        return Err(Error::Input("CoV is only defined for a positive mean".into()));
    }
    Ok(100.0 * sample_sd(values) / m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionCount {
    pub position: usize,
    pub cumulative_total: usize,
    pub cumulative_unique: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub run_id: String,
    pub sequence: String,
    pub judge: String,
    pub counts: Vec<PositionCount>,
    pub total_codes: usize,
    pub unique_codes: usize,
    pub its: f64,
    pub fit_total: Option<LinearFit>,
    pub fit_unique: Option<LinearFit>,
}

impl SaturationReport {
    pub fn its_display(&self) -> String {
        format!("{:.2}", self.its)
    }
}

pub fn build_report(
    run_id: impl Into<String>,
    sequence: impl Into<String>,
    judge: impl Into<String>,
    counts: Vec<PositionCount>,
) -> Result<SaturationReport> {
    let last = *counts.last().ok_or_else(|| Error::Input("no position counts".into()))?;
    for pair in counts.windows(2) {
        if pair[1].cumulative_total < pair[0].cumulative_total
            || pair[1].cumulative_unique < pair[0].cumulative_unique
        {
            return Err(Error::Structural("cumulative counts decrease".into()));
        }
    }
    if counts.iter().any(|c| c.cumulative_unique > c.cumulative_total) {
        return Err(Error::Structural("unique count exceeds total count".into()));
    }
    let its = its_ratio(last.cumulative_unique, last.cumulative_total)?;
    let totals: Vec<usize> = counts.iter().map(|c| c.cumulative_total).collect();
    let uniques: Vec<usize> = counts.iter().map(|c| c.cumulative_unique).collect();
    Ok(SaturationReport {
        run_id: run_id.into(),
        sequence: sequence.into(),
        judge: judge.into(),
        total_codes: last.cumulative_total,
        unique_codes: last.cumulative_unique,
        its,
        fit_total: fit_cumulative(&totals).ok(),
        fit_unique: fit_cumulative(&uniques).ok(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub its_values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub cov_percent: f64,
    /// Spread of the 2-decimal displayed values.
    pub range: f64,
}

pub fn summarize_its(values: &[f64]) -> Result<StabilitySummary> {
    let cov = cov_percent(values)?;
    let shown: Vec<f64> = values.iter().map(|&v| round2(v)).collect();
    let max = shown.iter().cloned().fold(f64::MIN, f64::max);
    let min = shown.iter().cloned().fold(f64::MAX, f64::min);
    Ok(StabilitySummary {
        its_values: values.to_vec(),
        mean: mean(values),
        sd: sample_sd(values),
        cov_percent: cov,
        range: round2(max - min),
    })
}

pub fn summarize_runs(reports: &[SaturationReport]) -> Result<StabilitySummary> {
    let values: Vec<f64> = reports.iter().map(|r| r.its).collect();
    summarize_its(&values)
}
