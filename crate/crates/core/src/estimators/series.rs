use crate::brownian::{coarsen, make_brownian_grid};
use crate::ensemble::{simulate_ensemble, step_count, PathEnsemble, RunSetup};
use crate::integrators::{exact_gbm_path, exact_gl_path, integrate_path, Scheme};
use crate::model::SdeModel;
use crate::parallel::map_indexed;
use crate::{Error, Result};

use super::distance::{ks_two_sample, w1_sorted};
use super::moments::{abs_pow, euclidean_norms, mean_log, moment_of_norms, Moment};
use super::UNRELIABLE_FRACTION;

/// Time-indexed estimates of `E|.|^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub p: f64,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub n_paths: usize,
    pub n_diverged: usize,
    pub unreliable: bool,
}

impl MomentSeries {
    /// Running supremum of the estimates.
    pub fn running_sup(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.values
            .iter()
            .map(|&v| {
                best = best.max(v);
                best
            })
            .collect()
    }
}

/// Strong error `E|x(t) - X(t)|^p` of a scheme against a reference solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub p: f64,
    pub h: f64,
    pub raw: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// `raw / h^(p/2)`.
    pub normalized: Vec<f64>,
    /// Mean of `ln|x - X|` over paths with a non-zero error.
    pub log_mean: Vec<f64>,
    pub n_paths: usize,
    pub n_diverged: usize,
    pub unreliable: bool,
}

/// Per-coordinate distances between the time-t law and the reference-time law.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSeries {
    pub times: Vec<f64>,
    pub dim: usize,
    /// Row-major `times x dim`.
    pub ks: Vec<f64>,
    pub w1: Vec<f64>,
    pub reference_time: f64,
    pub n_paths: usize,
    pub n_diverged: usize,
    pub unreliable: bool,
}

impl DistanceSeries {
    pub fn ks_at(&self, t: usize, coord: usize) -> f64 {
        self.ks[t * self.dim + coord]
    }

    pub fn w1_at(&self, t: usize, coord: usize) -> f64 {
        self.w1[t * self.dim + coord]
    }

    pub fn ks_column(&self, coord: usize) -> Vec<f64> {
        (0..self.times.len()).map(|t| self.ks_at(t, coord)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractivitySeries {
    /// `E|X(t, x0) - X(t, y0)|^p` under synchronous coupling.
    pub series: MomentSeries,
    /// Fitted exponential rate of the decaying segment, if one was found.
    pub rate: Option<f64>,
    pub log_mean: Vec<f64>,
}

/// Reference solutions for strong-error estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    /// Closed-form Ginzburg-Landau solution with trapezoidal time integral.
    ExactGl { alpha: f64, sigma: f64 },
    /// Closed-form geometric Brownian motion.
    ExactGbm { a: f64, b: f64 },
    /// The implicit scheme itself on the refined grid.
    FineBem,
}

impl Oracle {
    /// Resolves an oracle name against a model; `auto` picks the closed form
    /// when the model has one.
    pub fn for_model(name: &str, model: &SdeModel) -> Result<Self> {
        let param = |key: &str| {
            model
                .param(key)
                .ok_or_else(|| Error::invalid(format!("oracle {name} needs model parameter `{key}`")))
        };
        match (name, model.name()) {
            ("exact_gl", "ginzburg_landau") | ("auto", "ginzburg_landau") => Ok(Oracle::ExactGl {
                alpha: param("alpha")?,
                sigma: param("sigma")?,
            }),
            ("exact_gbm", "gbm") | ("auto", "gbm") => Ok(Oracle::ExactGbm {
                a: param("a")?,
                b: param("b")?,
            }),
            ("fine_bem", _) | ("auto", _) => Ok(Oracle::FineBem),
            ("exact_gl", m) | ("exact_gbm", m) => {
                Err(Error::invalid(format!("oracle {name} does not apply to model {m}")))
            }
            (other, _) => Err(Error::NotFound(format!(
                "unknown oracle `{other}` (expected exact_gl, exact_gbm, fine_bem or auto)"
            ))),
        }
    }

    pub fn min_refine(&self) -> usize {
        match self {
            Oracle::ExactGl { .. } => 16,
            Oracle::ExactGbm { .. } => 1,
            Oracle::FineBem => 2,
        }
    }
}

fn unreliable(n_diverged: usize, n_paths: usize) -> bool {
    n_diverged as f64 > UNRELIABLE_FRACTION * n_paths as f64
}

/// Moment of a column, or NaN when divergence left fewer than two samples.
fn moment_or_nan(norms: &[f64], p: f64) -> Result<Moment> {
    if norms.len() < 2 {
        return Ok(Moment {
            value: f64::NAN,
            stderr: f64::NAN,
        });
    }
    moment_of_norms(norms, p)
}

/// Reduces per-path norm series (None for divergent paths) into moments.
fn reduce_norms(
    per_path: &[Option<Vec<f64>>],
    n_times: usize,
    p: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, usize)> {
    let valid: Vec<&Vec<f64>> = per_path.iter().flatten().collect();
    let n_diverged = per_path.len() - valid.len();
    let mut values = Vec::with_capacity(n_times);
    let mut stderrs = Vec::with_capacity(n_times);
    let mut logs = Vec::with_capacity(n_times);
    let mut column = Vec::with_capacity(valid.len());
    for t in 0..n_times {
        column.clear();
        column.extend(valid.iter().map(|norms| norms[t]));
        let m = moment_or_nan(&column, p)?;
        values.push(m.value);
        stderrs.push(m.stderr);
        logs.push(mean_log(&column).0);
    }
    Ok((values, stderrs, logs, n_diverged))
}

fn diff_norms(a: &[f64], b: &[f64], dim: usize) -> Vec<f64> {
    a.chunks_exact(dim)
        .zip(b.chunks_exact(dim))
        .map(|(x, y)| {
            if dim == 1 {
                (x[0] - y[0]).abs()
            } else {
                x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
            }
        })
        .collect()
}

/// Strong error of `scheme` against `oracle`. Each path draws one Brownian
/// grid at step `h / oracle_refine`; the scheme runs on its exact coarsening.
pub fn strong_error_series(
    model: &SdeModel,
    setup: &RunSetup,
    p: f64,
    scheme: Scheme,
    oracle: Oracle,
    oracle_refine: usize,
) -> Result<ErrorSeries> {
    let n_steps = setup.validate(model.dim())?;
    if oracle_refine < oracle.min_refine() {
        return Err(Error::invalid(format!(
            "oracle refinement {oracle_refine} is below the minimum {} for {oracle:?}",
            oracle.min_refine()
        )));
    }
    if matches!(oracle, Oracle::ExactGl { .. } | Oracle::ExactGbm { .. }) && model.dim() != 1 {
        return Err(Error::invalid("closed-form oracles are scalar"));
    }
    if !(p > 0.0 && p <= 2.0) {
        return Err(Error::invalid(format!("moment order must lie in (0, 2], got {p}")));
    }
    let times = setup.record_times(n_steps);
    let n_times = times.len();
    let dim = model.dim();
    let h_fine = setup.h / oracle_refine as f64;
    let oracle_every = oracle_refine * setup.record_every;

    let per_path = map_indexed(setup.n_paths, setup.workers, |i| {
        let fine = make_brownian_grid(setup.seed, i as u64, h_fine, n_steps * oracle_refine)?;
        let coarse = coarsen(&fine, oracle_refine)?;
        let approx = integrate_path(model, scheme, &setup.x0, &coarse, &setup.bem, setup.record_every)?;
        if approx.diverged() {
            return Ok(None);
        }
        let reference = match oracle {
            Oracle::ExactGl { alpha, sigma } => exact_gl_path(setup.x0[0], alpha, sigma, &fine, oracle_every)?,
            Oracle::ExactGbm { a, b } => exact_gbm_path(setup.x0[0], a, b, &fine, oracle_every)?,
            Oracle::FineBem => {
                let rec = integrate_path(model, Scheme::Bem, &setup.x0, &fine, &setup.bem, oracle_every)?;
                if rec.diverged() {
                    return Ok(None);
                }
                rec.states
            }
        };
        if reference.iter().any(|x| !x.is_finite()) {
            return Ok(None);
        }
        Ok(Some(diff_norms(&reference, &approx.states, dim)))
    })?;

    let (raw, stderrs, log_mean, n_diverged) = reduce_norms(&per_path, n_times, p)?;
    let scale = abs_pow(setup.h, p / 2.0);
    let normalized = raw.iter().map(|v| v / scale).collect();
    Ok(ErrorSeries {
        times,
        p,
        h: setup.h,
        raw,
        stderrs,
        normalized,
        log_mean,
        n_paths: setup.n_paths,
        n_diverged,
        unreliable: unreliable(n_diverged, setup.n_paths),
    })
}

/// Least-squares slope of `ln(value)` against `t` over the decaying segment:
/// from the running maximum onwards, keeping only estimates that exceed ten
/// times their standard error.
pub fn fit_decay_rate(times: &[f64], values: &[f64], stderrs: &[f64]) -> Option<f64> {
    let start = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0;
    let pts: Vec<(f64, f64)> = (start..values.len())
        .filter(|&i| values[i] > 0.0 && values[i] > 10.0 * stderrs[i] && values[i].is_finite())
        .map(|i| (times[i], values[i].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Moments of the difference of two solutions started at `setup.x0` and `y0`
/// and driven by the same Brownian path.
pub fn attractivity_series(
    model: &SdeModel,
    setup: &RunSetup,
    y0: &[f64],
    p: f64,
    scheme: Scheme,
) -> Result<AttractivitySeries> {
    let n_steps = setup.validate(model.dim())?;
    if y0.len() != model.dim() {
        return Err(Error::invalid(format!(
            "second initial state has length {}, model dimension is {}",
            y0.len(),
            model.dim()
        )));
    }
    let times = setup.record_times(n_steps);
    let n_times = times.len();
    let dim = model.dim();

    let per_path = map_indexed(setup.n_paths, setup.workers, |i| {
        let grid = make_brownian_grid(setup.seed, i as u64, setup.h, n_steps)?;
        let a = integrate_path(model, scheme, &setup.x0, &grid, &setup.bem, setup.record_every)?;
        let b = integrate_path(model, scheme, y0, &grid, &setup.bem, setup.record_every)?;
        if a.diverged() || b.diverged() {
            return Ok(None);
        }
        Ok(Some(diff_norms(&a.states, &b.states, dim)))
    })?;

    let (values, stderrs, log_mean, n_diverged) = reduce_norms(&per_path, n_times, p)?;
    let rate = fit_decay_rate(&times, &values, &stderrs);
    Ok(AttractivitySeries {
        series: MomentSeries {
            times,
            p,
            values,
            stderrs,
            n_paths: setup.n_paths,
            n_diverged,
            unreliable: unreliable(n_diverged, setup.n_paths),
        },
        rate,
        log_mean,
    })
}

/// `E|X(t)|^p` at every recorded time of an ensemble, over non-divergent paths.
pub fn moment_series(ensemble: &PathEnsemble, p: f64) -> Result<MomentSeries> {
    let mut values = Vec::with_capacity(ensemble.n_times());
    let mut stderrs = Vec::with_capacity(ensemble.n_times());
    for t in 0..ensemble.n_times() {
        let norms = euclidean_norms(&ensemble.snapshot(t), ensemble.dim)?;
        let m = moment_or_nan(&norms, p)?;
        values.push(m.value);
        stderrs.push(m.stderr);
    }
    let n_diverged = ensemble.n_diverged();
    Ok(MomentSeries {
        times: ensemble.times.clone(),
        p,
        values,
        stderrs,
        n_paths: ensemble.n_paths(),
        n_diverged,
        unreliable: unreliable(n_diverged, ensemble.n_paths()),
    })
}

/// K-S and W1 distances, per coordinate, between the ensemble at each recorded
/// time and the same ensemble at `reference_time`.
pub fn stationary_distance_series(model: &SdeModel, setup: &RunSetup, reference_time: f64) -> Result<DistanceSeries> {
    if !(reference_time >= 0.0 && reference_time <= setup.horizon) {
        return Err(Error::invalid(format!(
            "reference time {reference_time} lies outside [0, {}]",
            setup.horizon
        )));
    }
    let ref_index = step_count(reference_time, setup.h * setup.record_every as f64)
        .map_err(|_| Error::invalid(format!("reference time {reference_time} is not a recorded time")))?;
    let ensemble = simulate_ensemble(model, Scheme::Bem, setup)?;
    if ref_index >= ensemble.n_times() {
        return Err(Error::invalid(format!("reference time {reference_time} is not a recorded time")));
    }
    let n_valid = ensemble.n_paths() - ensemble.n_diverged();
    if n_valid == 0 {
        return Err(Error::invalid("every path diverged"));
    }
    let dim = ensemble.dim;
    let references: Vec<Vec<f64>> = (0..dim).map(|c| ensemble.marginal(ref_index, c)).collect();
    let mut ks = Vec::with_capacity(ensemble.n_times() * dim);
    let mut w1 = Vec::with_capacity(ensemble.n_times() * dim);
    for t in 0..ensemble.n_times() {
        for (c, reference) in references.iter().enumerate() {
            let sample = ensemble.marginal(t, c);
            ks.push(ks_two_sample(&sample, reference)?);
            w1.push(w1_sorted(&sample, reference)?);
        }
    }
    let n_diverged = ensemble.n_diverged();
    Ok(DistanceSeries {
        times: ensemble.times.clone(),
        dim,
        ks,
        w1,
        reference_time,
        n_paths: ensemble.n_paths(),
        n_diverged,
        unreliable: unreliable(n_diverged, ensemble.n_paths()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Params};

    fn zero_model() -> SdeModel {
        SdeModel::new("zero", 1, |_, out| out.fill(0.0), |_, out| out.fill(0.0)).unwrap()
    }

    fn contraction() -> SdeModel {
        SdeModel::new("contraction", 1, |x, out| out[0] = -x[0], |_, out| out[0] = 0.0)
            .unwrap()
            .with_jacobian(|_, out| out[0] = -1.0)
    }

    #[test]
    fn zero_model_has_zero_error() {
        let setup = RunSetup::new(vec![2.0], 0.01, 1.0, 4).with_record_every(10);
        let s = strong_error_series(&zero_model(), &setup, 1.0, Scheme::Bem, Oracle::FineBem, 4).unwrap();
        assert!(s.raw.iter().all(|&v| v == 0.0));
        assert_eq!(s.times.len(), 11);
        assert_eq!(s.n_diverged, 0);
    }

    #[test]
    fn normalized_column_is_raw_over_h_power() {
        let gl = builtin_model("ginzburg_landau", &Params::new()).unwrap().model;
        let setup = RunSetup::new(vec![1.0], 0.01, 0.5, 8).with_record_every(10);
        let oracle = Oracle::for_model("auto", &gl).unwrap();
        let s = strong_error_series(&gl, &setup, 0.5, Scheme::Bem, oracle, 16).unwrap();
        let scale = 0.01f64.powf(0.25);
        for (r, n) in s.raw.iter().zip(&s.normalized) {
            assert!((r / scale - n).abs() <= 1e-15 * n.abs().max(1.0));
        }
        assert!(strong_error_series(&gl, &setup, 0.5, Scheme::Bem, oracle, 8).is_err());
    }

    #[test]
    fn oracle_resolution() {
        let gl = builtin_model("ginzburg_landau", &Params::new()).unwrap().model;
        let q = builtin_model("quintic_2d", &Params::new()).unwrap().model;
        assert_eq!(
            Oracle::for_model("auto", &gl).unwrap(),
            Oracle::ExactGl {
                alpha: -0.25,
                sigma: 1.0
            }
        );
        assert_eq!(Oracle::for_model("auto", &q).unwrap(), Oracle::FineBem);
        assert!(Oracle::for_model("exact_gbm", &q).is_err());
        assert!(matches!(Oracle::for_model("magic", &q), Err(Error::NotFound(_))));
    }

    #[test]
    fn equal_starts_give_zero_difference() {
        let gl = builtin_model("ginzburg_landau", &Params::new()).unwrap().model;
        let setup = RunSetup::new(vec![1.3], 0.01, 1.0, 5).with_record_every(5);
        let a = attractivity_series(&gl, &setup, &[1.3], 0.5, Scheme::Bem).unwrap();
        assert!(a.series.values.iter().all(|&v| v == 0.0));
        assert!(a.rate.is_none());
    }

    #[test]
    fn contraction_rate_is_minus_one() {
        let setup = RunSetup::new(vec![2.0], 0.001, 5.0, 2).with_record_every(100);
        let a = attractivity_series(&contraction(), &setup, &[1.0], 1.0, Scheme::Bem).unwrap();
        let rate = a.rate.unwrap();
        assert!((rate + 1.0).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn decay_fit_ignores_noise_floor() {
        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| (-0.5 * t).exp()).collect();
        let mut stderrs = vec![0.0; 10];
        stderrs[9] = values[9]; // below 10x stderr: dropped
        let rate = fit_decay_rate(&times, &values, &stderrs).unwrap();
        assert!((rate + 0.5).abs() < 1e-12);
        assert!(fit_decay_rate(&[0.0], &[1.0], &[0.0]).is_none());
    }

    #[test]
    fn reference_time_distances_vanish() {
        let q = builtin_model("quintic_2d", &Params::new()).unwrap().model;
        let setup = RunSetup::new(vec![1.0, 1.0], 0.001, 0.2, 20).with_record_every(10);
        let d = stationary_distance_series(&q, &setup, 0.1).unwrap();
        let r = 10;
        assert_eq!(d.times[r], 0.1);
        assert_eq!(d.ks_at(r, 0), 0.0);
        assert_eq!(d.ks_at(r, 1), 0.0);
        assert_eq!(d.w1_at(r, 1), 0.0);
        // every path starts at the same point, the reference sample is spread out
        assert_eq!(d.ks_at(0, 0), 1.0);
        assert!(stationary_distance_series(&q, &setup, 0.3).is_err());
        assert!(stationary_distance_series(&q, &setup, 0.1005).is_err());
    }

    #[test]
    fn running_sup_is_monotone() {
        let s = MomentSeries {
            times: vec![0.0, 1.0, 2.0],
            p: 1.0,
            values: vec![1.0, 3.0, 2.0],
            stderrs: vec![0.0; 3],
            n_paths: 2,
            n_diverged: 0,
            unreliable: false,
        };
        assert_eq!(s.running_sup(), vec![1.0, 3.0, 3.0]);
    }
}
