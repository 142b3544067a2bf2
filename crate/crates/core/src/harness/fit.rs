//! Scalar summaries: empirical convergence order and flatness of a series.

use crate::estimators::ErrorSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares fit of `ln(error)` against `ln(h)` over `(h, error)` pairs
/// taken from a geometric ladder of at least four step sizes.
pub fn fit_order(table: &[(f64, f64)], _p: f64) -> Result<OrderFit> {
    if table.len() < 4 {
        return Err(Error::invalid(format!("need at least 4 step sizes, got {}", table.len())));
    }
    let mut rows = table.to_vec();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if rows.iter().any(|&(h, e)| !(h > 0.0 && e > 0.0 && h.is_finite() && e.is_finite())) {
        return Err(Error::invalid("step sizes and errors must be positive and finite"));
    }
    let ratio = rows[1].0 / rows[0].0;
    if ratio.is_nan() || ratio <= 1.0 || rows.windows(2).any(|w| ((w[1].0 / w[0].0) / ratio - 1.0).abs() > 1e-9) {
        return Err(Error::invalid("step sizes must form a geometric ladder"));
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(OrderFit { slope, intercept, r2 })
}

/// Maximum over `t >= burn_in` of the normalized error divided by its median
/// over the same window.
pub fn flatness_metric(series: &ErrorSeries, burn_in: f64) -> Result<f64> {
    window_flatness(&series.times, &series.normalized, burn_in)
}

/// [`flatness_metric`] on raw columns.
pub fn window_flatness(times: &[f64], values: &[f64], burn_in: f64) -> Result<f64> {
    let mut window: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= burn_in)
        .map(|(_, v)| *v)
        .collect();
    if window.is_empty() {
        return Err(Error::invalid(format!("no recorded times at or after burn-in {burn_in}")));
    }
    if window.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("series contains NaN"));
    }
    window.sort_by(f64::total_cmp);
    let n = window.len();
    let median = if n % 2 == 1 {
        window[n / 2]
    } else {
        0.5 * (window[n / 2 - 1] + window[n / 2])
    };
    Ok(window[n - 1] / median)
}
