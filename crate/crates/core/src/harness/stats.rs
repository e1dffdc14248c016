//! Regression, smoothing and order statistics.

use thiserror::Error;

use crate::runtime::LatencySample;

/// Default slope threshold: a deployment keeps pace when its latency grows by
/// less than 100 ms per second of run time.
pub const DEFAULT_SLOPE_THRESHOLD_MS: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("regression needs at least two samples with distinct times")]
    NotEnoughSamples,
}

/// Ordinary least squares fit of latency (ms) against run time (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendResult {
    /// Milliseconds of latency growth per second of run time.
    pub slope: f64,
    pub intercept: f64,
    /// `slope < threshold`, strictly.
    pub sufficient: bool,
}

/// Fits a trend line through the latency samples and compares its slope
/// against the threshold.
pub fn latency_trend(
    samples: &[LatencySample],
    threshold_ms_per_s: f64,
) -> Result<TrendResult, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::NotEnoughSamples);
    }
    let n = samples.len() as f64;
    let mean_t = samples.iter().map(|s| s.t).sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.latency_ms).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for s in samples {
        let dt = s.t - mean_t;
        cov += dt * (s.latency_ms - mean_y);
        var += dt * dt;
    }
    if var == 0.0 {
        return Err(StatsError::NotEnoughSamples);
    }
    let slope = cov / var;
    let intercept = mean_y - slope * mean_t;
    Ok(TrendResult {
        slope,
        intercept,
        sufficient: slope < threshold_ms_per_s,
    })
}

/// Trailing moving average: one value per input position from `window`
/// onward; shorter inputs produce an empty series.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be positive");
    if series.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(series.len() - window + 1);
    let mut sum: f64 = series[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..series.len() {
        sum += series[i] - series[i - window];
        out.push(sum / window as f64);
    }
    out
}

/// Least-squares line through the origin, `y = k x`, with the coefficient of
/// determination computed against the mean of `y`.
pub fn fit_through_origin(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let k = sxy / sxx;
    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - k * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    (k, r_squared)
}

/// Statistical median; for even counts the lower of the two middle values.
pub fn median_lower<T: Ord + Copy>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<T> = values.to_vec();
    sorted.sort();
    Some(sorted[(sorted.len() - 1) / 2])
}
