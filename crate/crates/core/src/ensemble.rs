//! Monte Carlo ensembles of independently driven paths.

use crate::brownian::make_brownian_grid;
use crate::integrators::{integrate_path, BemConfig, Scheme};
use crate::model::SdeModel;
use crate::parallel::map_indexed;
use crate::{Error, Result};

/// Number of steps of size `h` in `horizon`, requiring the ratio to be
/// integral to within one unit in the last place.
pub fn step_count(horizon: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be non-negative, got {horizon}")));
    }
    let ratio = horizon / h;
    let n = ratio.round();
    let ulp = if n == 0.0 { f64::MIN_POSITIVE } else { n.abs() * f64::EPSILON };
    if (ratio - n).abs() > ulp {
        return Err(Error::invalid(format!("horizon {horizon} is not an integer multiple of step {h}")));
    }
    Ok(n as usize)
}

/// Shared Monte Carlo settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub x0: Vec<f64>,
    pub h: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub record_every: usize,
    pub bem: BemConfig,
    /// Worker threads; `None` uses every core. Results do not depend on it.
    pub workers: Option<usize>,
}

impl RunSetup {
    pub fn new(x0: Vec<f64>, h: f64, horizon: f64, n_paths: usize) -> Self {
        Self {
            x0,
            h,
            horizon,
            n_paths,
            seed: 1,
            record_every: 1,
            bem: BemConfig::default(),
            workers: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub fn n_steps(&self) -> Result<usize> {
        step_count(self.horizon, self.h)
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<usize> {
        if self.x0.len() != dim {
            return Err(Error::invalid(format!(
                "initial state has length {}, model dimension is {dim}",
                self.x0.len()
            )));
        }
        if self.n_paths < 2 {
            return Err(Error::invalid("at least two paths are required"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be at least 1"));
        }
        let n = self.n_steps()?;
        if n == 0 {
            return Err(Error::invalid("horizon must cover at least one step"));
        }
        Ok(n)
    }

    /// Recorded times `i * record_every * h`.
    pub fn record_times(&self, n_steps: usize) -> Vec<f64> {
        (0..=n_steps / self.record_every)
            .map(|i| (i * self.record_every) as f64 * self.h)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub model_name: String,
    pub h: f64,
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major `paths x times x dim`; rows of divergent paths are NaN from
    /// the failing record onwards.
    pub states: Vec<f64>,
    pub seed: u64,
    /// Stream id of each path.
    pub path_ids: Vec<u64>,
    pub diverged: Vec<bool>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.path_ids.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_diverged(&self) -> usize {
        self.diverged.iter().filter(|&&d| d).count()
    }

    pub fn state(&self, path: usize, time: usize) -> &[f64] {
        let start = (path * self.n_times() + time) * self.dim;
        &self.states[start..start + self.dim]
    }

    /// States at one recorded time, stacked row-major over non-divergent paths.
    pub fn snapshot(&self, time: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_paths() * self.dim);
        for p in (0..self.n_paths()).filter(|&p| !self.diverged[p]) {
            out.extend_from_slice(self.state(p, time));
        }
        out
    }

    /// One coordinate at one recorded time over non-divergent paths.
    pub fn marginal(&self, time: usize, coord: usize) -> Vec<f64> {
        (0..self.n_paths())
            .filter(|&p| !self.diverged[p])
            .map(|p| self.state(p, time)[coord])
            .collect()
    }
}

/// Integrates `n_paths` independent paths; path `i` uses stream `i` of `seed`.
pub fn simulate_ensemble(model: &SdeModel, scheme: Scheme, setup: &RunSetup) -> Result<PathEnsemble> {
    let n_steps = setup.validate(model.dim())?;
    let times = setup.record_times(n_steps);
    let n_times = times.len();
    let dim = model.dim();

    let records = map_indexed(setup.n_paths, setup.workers, |i| {
        let grid = make_brownian_grid(setup.seed, i as u64, setup.h, n_steps)?;
        integrate_path(model, scheme, &setup.x0, &grid, &setup.bem, setup.record_every)
    })?;

    let mut states = Vec::with_capacity(setup.n_paths * n_times * dim);
    let mut diverged = Vec::with_capacity(setup.n_paths);
    for rec in records {
        let have = rec.states.len();
        states.extend_from_slice(&rec.states);
        states.extend(std::iter::repeat_n(f64::NAN, n_times * dim - have));
        diverged.push(rec.diverged());
    }

    Ok(PathEnsemble {
        model_name: model.name().to_string(),
        h: setup.h,
        dim,
        times,
        states,
        seed: setup.seed,
        path_ids: (0..setup.n_paths as u64).collect(),
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Params};

    #[test]
    fn step_count_checks_integrality() {
        assert_eq!(step_count(50.0, 0.001).unwrap(), 50_000);
        assert_eq!(step_count(1.0, 2f64.powi(-9)).unwrap(), 512);
        assert_eq!(step_count(200.0, 0.001).unwrap(), 200_000);
        assert!(step_count(1.0, 0.3).is_err());
        assert!(step_count(1.0, 0.0).is_err());
    }

    #[test]
    fn ensemble_layout_and_determinism() {
        let model = builtin_model("ginzburg_landau", &Params::new()).unwrap().model;
        let setup = RunSetup::new(vec![1.0], 0.01, 1.0, 6).with_record_every(10).with_workers(Some(1));
        let a = simulate_ensemble(&model, Scheme::Bem, &setup).unwrap();
        let b = simulate_ensemble(&model, Scheme::Bem, &setup.clone().with_workers(Some(4))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_times(), 11);
        assert_eq!(a.states.len(), 6 * 11);
        assert_eq!(a.state(3, 0), &[1.0]);
        assert_eq!(a.snapshot(5).len(), 6);
        assert_eq!(a.n_diverged(), 0);
        assert!(a.states.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn divergent_paths_are_padded() {
        let model = builtin_model("ginzburg_landau", &Params::new()).unwrap().model;
        let setup = RunSetup::new(vec![1e3], 0.1, 2.0, 3);
        let ens = simulate_ensemble(&model, Scheme::Em, &setup).unwrap();
        assert_eq!(ens.n_diverged(), 3);
        assert!(ens.state(0, ens.n_times() - 1)[0].is_nan());
        assert!(ens.marginal(0, 0).is_empty());
    }
}
