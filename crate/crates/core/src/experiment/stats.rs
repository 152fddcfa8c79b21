use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and 95% normal-approximation interval of one x-point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub n: usize,
    pub mean: f64,
    /// `1.96 σ̂ / √N` with the sample standard deviation; `None` when `N < 2`.
    pub ci_half_width: Option<f64>,
}

/// Summary of a set of equally long series, point by point.
pub fn summarize_ci(series: &[Vec<f64>]) -> Result<Vec<PointSummary>> {
    let Some(first) = series.first() else {
        return Err(Error::Empty("series set"));
    };
    if series.iter().any(|s| s.len() != first.len()) {
        return Err(Error::Shape("series have different lengths".into()));
    }
    Ok((0..first.len())
        .map(|i| {
            let column: Vec<f64> = series.iter().map(|s| s[i]).collect();
            point_summary(&column)
        })
        .collect())
}

/// Summary of a single sample.
pub fn point_summary(values: &[f64]) -> PointSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ci_half_width = (n >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * var.sqrt() / (n as f64).sqrt()
    });
    PointSummary { n, mean, ci_half_width }
}
