use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    pub value: f64,
    pub stderr: f64,
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("moment order must lie in (0, 2], got {p}")))
    }
}

/// `|v|^p` evaluated as `exp(p ln|v|)`, with `0^p = 0`.
#[inline]
pub(crate) fn abs_pow(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        (p * v.abs().ln()).exp()
    }
}

/// Mean and standard error of `|x|^p` over non-negative norms.
pub(crate) fn moment_of_norms(norms: &[f64], p: f64) -> Result<Moment> {
    check_p(p)?;
    match norms.len() {
        0 => return Err(Error::invalid("empty sample")),
        1 => return Err(Error::invalid("at least two samples are needed for a standard error")),
        _ => {}
    }
    let n = norms.len() as f64;
    let powered: Vec<f64> = norms.iter().map(|&v| abs_pow(v, p)).collect();
    let mean = powered.iter().sum::<f64>() / n;
    let var = powered.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(Moment {
        value: mean,
        stderr: (var / n).sqrt(),
    })
}

pub(crate) fn euclidean_norms(rows: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !rows.len().is_multiple_of(dim) {
        return Err(Error::invalid(format!("sample of length {} is not a multiple of dim {dim}", rows.len())));
    }
    Ok(rows
        .chunks_exact(dim)
        .map(|r| {
            if dim == 1 {
                r[0].abs()
            } else {
                r.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
        })
        .collect())
}

/// Estimates `E|X|^p` from row-major samples of dimension `dim`.
pub fn pth_moment(rows: &[f64], dim: usize, p: f64) -> Result<Moment> {
    moment_of_norms(&euclidean_norms(rows, dim)?, p)
}

/// Mean of `ln|x|` over the non-zero norms, and the number of zeros skipped.
pub(crate) fn mean_log(norms: &[f64]) -> (f64, usize) {
    let (sum, count) = norms
        .iter()
        .filter(|&&v| v > 0.0)
        .fold((0.0, 0usize), |(s, c), v| (s + v.ln(), c + 1));
    let mean = if count == 0 { f64::NEG_INFINITY } else { sum / count as f64 };
    (mean, norms.len() - count)
}
