use crate::{Error, Result};

fn sorted(xs: &[f64], what: &str) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::invalid(format!("{what} sample is empty")));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid(format!("{what} sample contains NaN")));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample Kolmogorov-Smirnov statistic: the sup-distance between the
/// empirical CDFs, evaluated at every distinct value so ties are exact.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted(a, "first")?;
    let b = sorted(b, "second")?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Quantile function of a sorted sample at probability `q`, interpolating
/// linearly between the plotting positions `(i + 1/2) / n`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * n as f64 - 0.5;
    if pos <= 0.0 {
        return sorted[0];
    }
    let lo = pos.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

fn resample(sorted: &[f64], len: usize) -> Vec<f64> {
    (0..len).map(|k| quantile(sorted, (k as f64 + 0.5) / len as f64)).collect()
}

/// One-dimensional Wasserstein-1 distance: mean absolute difference of the
/// sorted samples. Samples of unequal size are first resampled to the larger
/// size through their interpolated quantile functions.
pub fn w1_sorted(a: &[f64], b: &[f64]) -> Result<f64> {
    let mut a = sorted(a, "first")?;
    let mut b = sorted(b, "second")?;
    if a.len() < b.len() {
        a = resample(&a, b.len());
    } else if b.len() < a.len() {
        b = resample(&b, a.len());
    }
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}
