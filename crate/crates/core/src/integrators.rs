//! Time stepping: backward (drift-implicit) Euler-Maruyama, explicit
//! Euler-Maruyama, and closed-form solutions used as oracles.

use nalgebra::{DMatrix, DVector};

use crate::brownian::BrownianGrid;
use crate::model::SdeModel;
use crate::{Error, Result};

/// Nonlinear solver settings for the implicit step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BemConfig {
    /// Tolerance on the sup-norm of the implicit-equation residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub fallback_fixed_point_iter: usize,
    /// Relative step of the central-difference Jacobian.
    pub jacobian_fd_eps: f64,
}

impl Default for BemConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            newton_max_iter: 50,
            fallback_fixed_point_iter: 200,
            jacobian_fd_eps: 1e-7,
        }
    }
}

impl BemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0 && self.jacobian_fd_eps > 0.0) {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        if self.newton_max_iter == 0 || self.fallback_fixed_point_iter == 0 {
            return Err(Error::invalid("solver iteration limits must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: Vec<f64>,
    pub newton_iters: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Backward Euler-Maruyama.
    Bem,
    /// Explicit Euler-Maruyama.
    Em,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bem" => Ok(Scheme::Bem),
            "em" => Ok(Scheme::Em),
            other => Err(Error::invalid(format!("unknown scheme `{other}` (expected bem or em)"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Bem => "bem",
            Scheme::Em => "em",
        })
    }
}

const MAX_HALVINGS: usize = 30;
const NEWTON_HEADROOM: f64 = 1.0 / 16.0;

#[inline]
fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be finite")))
    }
}

/// Reusable buffers for the implicit step of one model.
pub struct BemSolver<'m> {
    model: &'m SdeModel,
    cfg: BemConfig,
    base: Vec<f64>,
    x: Vec<f64>,
    trial: Vec<f64>,
    res: Vec<f64>,
    trial_res: Vec<f64>,
    delta: Vec<f64>,
    fx: Vec<f64>,
    jac: Vec<f64>,
    probe: Vec<f64>,
    probe_f: Vec<f64>,
}

impl<'m> BemSolver<'m> {
    pub fn new(model: &'m SdeModel, cfg: BemConfig) -> Result<Self> {
        cfg.validate()?;
        let d = model.dim();
        Ok(Self {
            model,
            cfg,
            base: vec![0.0; d],
            x: vec![0.0; d],
            trial: vec![0.0; d],
            res: vec![0.0; d],
            trial_res: vec![0.0; d],
            delta: vec![0.0; d],
            fx: vec![0.0; d],
            jac: vec![0.0; d * d],
            probe: vec![0.0; d],
            probe_f: vec![0.0; d],
        })
    }

    fn check_step(&self, h: f64) -> Result<()> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {h}")));
        }
        if let Some(limit) = self.model.step_limit() {
            if h > limit {
                return Err(Error::invalid(format!(
                    "step {h} exceeds the implicit-solvability bound {limit} of model {}",
                    self.model.name()
                )));
            }
        }
        Ok(())
    }

    /// residual(X) = X - base - h f(X), written to `out`; returns its sup-norm.
    fn residual(model: &SdeModel, base: &[f64], h: f64, x: &[f64], fx: &mut [f64], out: &mut [f64]) -> f64 {
        model.drift_into(x, fx);
        for i in 0..x.len() {
            out[i] = x[i] - base[i] - h * fx[i];
        }
        sup_norm(out)
    }

    fn drift_jacobian(&mut self) {
        if self.model.jacobian_into(&self.x, &mut self.jac) {
            return;
        }
        let d = self.model.dim();
        self.probe.copy_from_slice(&self.x);
        for j in 0..d {
            let step = self.cfg.jacobian_fd_eps * self.x[j].abs().max(1.0);
            self.probe[j] = self.x[j] + step;
            self.model.drift_into(&self.probe, &mut self.probe_f);
            for i in 0..d {
                self.jac[i * d + j] = self.probe_f[i];
            }
            self.probe[j] = self.x[j] - step;
            self.model.drift_into(&self.probe, &mut self.probe_f);
            for i in 0..d {
                self.jac[i * d + j] = (self.jac[i * d + j] - self.probe_f[i]) / (2.0 * step);
            }
            self.probe[j] = self.x[j];
        }
    }

    /// Solves (I - h Df) delta = -res. Returns false if the matrix is singular.
    fn newton_direction(&mut self, h: f64) -> bool {
        self.drift_jacobian();
        let d = self.model.dim();
        if d == 1 {
            let m = 1.0 - h * self.jac[0];
            if m == 0.0 || !m.is_finite() {
                return false;
            }
            self.delta[0] = -self.res[0] / m;
            return self.delta[0].is_finite();
        }
        let mut m = DMatrix::<f64>::identity(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] -= h * self.jac[i * d + j];
            }
        }
        let rhs = DVector::from_iterator(d, self.res.iter().map(|r| -r));
        match m.lu().solve(&rhs) {
            Some(sol) => {
                self.delta.copy_from_slice(sol.as_slice());
                self.delta.iter().all(|v| v.is_finite())
            }
            None => false,
        }
    }

    /// One step of X = x_prev + f(X) h + g(x_prev) dW.
    pub fn step(&mut self, x_prev: &[f64], h: f64, dw: f64, out: &mut [f64]) -> Result<(usize, f64, bool)> {
        self.check_step(h)?;
        let d = self.model.dim();
        if x_prev.len() != d {
            return Err(Error::invalid(format!("state has length {}, model dimension is {d}", x_prev.len())));
        }
        check_finite("previous state", x_prev)?;
        if !dw.is_finite() {
            return Err(Error::invalid("Brownian increment must be finite"));
        }
        let model = self.model;

        model.diffusion_into(x_prev, &mut self.fx);
        for i in 0..d {
            self.base[i] = x_prev[i] + self.fx[i] * dw;
        }
        // explicit Euler predictor
        model.drift_into(x_prev, &mut self.fx);
        for i in 0..d {
            self.x[i] = self.base[i] + h * self.fx[i];
        }
        let mut norm = Self::residual(model, &self.base, h, &self.x, &mut self.fx, &mut self.res);
        let mut iters = 0;
        // Aim below the tolerance so the contract still holds when the
        // residual is re-evaluated with a different rounding order.
        let target = self.cfg.newton_tol * NEWTON_HEADROOM;

        while !(norm <= target) && iters < self.cfg.newton_max_iter {
            if !norm.is_finite() || !self.newton_direction(h) {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                for i in 0..d {
                    self.trial[i] = self.x[i] + t * self.delta[i];
                }
                let trial_norm = Self::residual(model, &self.base, h, &self.trial, &mut self.fx, &mut self.trial_res);
                if trial_norm < norm {
                    std::mem::swap(&mut self.x, &mut self.trial);
                    std::mem::swap(&mut self.res, &mut self.trial_res);
                    norm = trial_norm;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            iters += 1;
        }

        if !(norm <= self.cfg.newton_tol) {
            // fixed-point fallback X <- base + h f(X), keeping the best iterate
            self.trial.copy_from_slice(&self.x);
            for _ in 0..self.cfg.fallback_fixed_point_iter {
                model.drift_into(&self.trial, &mut self.fx);
                for i in 0..d {
                    self.trial[i] = self.base[i] + h * self.fx[i];
                }
                let n = Self::residual(model, &self.base, h, &self.trial, &mut self.fx, &mut self.trial_res);
                if !n.is_finite() {
                    break;
                }
                if n < norm {
                    self.x.copy_from_slice(&self.trial);
                    norm = n;
                }
                if norm <= self.cfg.newton_tol {
                    break;
                }
            }
        }

        out.copy_from_slice(&self.x);
        let converged = norm <= self.cfg.newton_tol && self.x.iter().all(|v| v.is_finite());
        Ok((iters, norm, converged))
    }
}

pub fn bem_step(model: &SdeModel, x_prev: &[f64], h: f64, dw: f64, cfg: &BemConfig) -> Result<StepResult> {
    let mut solver = BemSolver::new(model, *cfg)?;
    let mut state = vec![0.0; model.dim()];
    let (newton_iters, residual, converged) = solver.step(x_prev, h, dw, &mut state)?;
    Ok(StepResult {
        state,
        newton_iters,
        residual,
        converged,
    })
}

fn em_step_into(model: &SdeModel, x_prev: &[f64], h: f64, dw: f64, f: &mut [f64], g: &mut [f64], out: &mut [f64]) {
    model.drift_into(x_prev, f);
    model.diffusion_into(x_prev, g);
    for i in 0..x_prev.len() {
        out[i] = x_prev[i] + f[i] * h + g[i] * dw;
    }
}

pub fn em_step(model: &SdeModel, x_prev: &[f64], h: f64, dw: f64) -> Result<Vec<f64>> {
    let d = model.dim();
    if x_prev.len() != d {
        return Err(Error::invalid(format!("state has length {}, model dimension is {d}", x_prev.len())));
    }
    check_finite("previous state", x_prev)?;
    if !(h.is_finite() && h > 0.0 && dw.is_finite()) {
        return Err(Error::invalid("step and increment must be finite, step positive"));
    }
    let (mut f, mut g, mut out) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    em_step_into(model, x_prev, h, dw, &mut f, &mut g, &mut out);
    Ok(out)
}

/// States of one integrated path, sampled every `record_every` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub dim: usize,
    pub h: f64,
    pub record_every: usize,
    /// Row-major `n_records x dim`.
    pub states: Vec<f64>,
    /// Step index at which the scheme failed, if it did.
    pub diverged_at: Option<usize>,
    pub max_newton_iters: usize,
}

impl PathRecord {
    pub fn n_records(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn time(&self, i: usize) -> f64 {
        (i * self.record_every) as f64 * self.h
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Iterates the chosen scheme over every increment of `grid`.
///
/// A failed implicit solve or a non-finite state ends the path and sets
/// `diverged_at`; it is not an error.
pub fn integrate_path(
    model: &SdeModel,
    scheme: Scheme,
    x0: &[f64],
    grid: &BrownianGrid,
    cfg: &BemConfig,
    record_every: usize,
) -> Result<PathRecord> {
    let d = model.dim();
    if record_every == 0 {
        return Err(Error::invalid("record_every must be at least 1"));
    }
    if x0.len() != d {
        return Err(Error::invalid(format!("initial state has length {}, model dimension is {d}", x0.len())));
    }
    check_finite("initial state", x0)?;
    let h = grid.h();

    let n_records = grid.n_steps() / record_every + 1;
    let mut states = Vec::with_capacity(n_records * d);
    states.extend_from_slice(x0);

    let mut solver = match scheme {
        Scheme::Bem => {
            let solver = BemSolver::new(model, *cfg)?;
            solver.check_step(h)?;
            Some(solver)
        }
        Scheme::Em => None,
    };
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let (mut fbuf, mut gbuf) = (vec![0.0; d], vec![0.0; d]);
    let mut diverged_at = None;
    let mut max_newton_iters = 0;

    for (k, &dw) in grid.increments().iter().enumerate() {
        let ok = match solver.as_mut() {
            Some(solver) => match solver.step(&x, h, dw, &mut next) {
                Ok((iters, _, converged)) => {
                    max_newton_iters = max_newton_iters.max(iters);
                    converged
                }
                Err(_) => false,
            },
            None => {
                em_step_into(model, &x, h, dw, &mut fbuf, &mut gbuf, &mut next);
                true
            }
        };
        if !ok || next.iter().any(|v| !v.is_finite()) {
            diverged_at = Some(k + 1);
            break;
        }
        std::mem::swap(&mut x, &mut next);
        if (k + 1) % record_every == 0 {
            states.extend_from_slice(&x);
        }
    }

    Ok(PathRecord {
        dim: d,
        h,
        record_every,
        states,
        diverged_at,
        max_newton_iters,
    })
}

/// Closed-form Ginzburg-Landau solution
/// `x(t) = x0 exp(alpha t + sigma W(t)) / sqrt(1 + 2 x0^2 int_0^t exp(2 alpha s + 2 sigma W(s)) ds)`.
///
/// The time integral uses the trapezoidal rule on the grid, so the result is
/// exact only up to quadrature error; reference grids are kept at least 16
/// times finer than the scheme under test.
pub fn exact_gl_path(x0: f64, alpha: f64, sigma: f64, grid: &BrownianGrid, record_every: usize) -> Result<Vec<f64>> {
    if !x0.is_finite() {
        return Err(Error::invalid("initial value must be finite"));
    }
    if record_every == 0 {
        return Err(Error::invalid("record_every must be at least 1"));
    }
    let h = grid.h();
    let mut out = Vec::with_capacity(grid.n_steps() / record_every + 1);
    out.push(x0);
    if x0 == 0.0 {
        out.resize(grid.n_steps() / record_every + 1, 0.0);
        return Ok(out);
    }
    let weight = 2.0 * x0 * x0;
    let mut w = 0.0;
    let mut integral = 0.0;
    let mut prev = 1.0; // integrand at s = 0
    for (k, dw) in grid.increments().iter().enumerate() {
        w += dw;
        let t = (k + 1) as f64 * h;
        let exponent = alpha * t + sigma * w;
        let cur = (2.0 * exponent).exp();
        integral += 0.5 * h * (prev + cur);
        prev = cur;
        if (k + 1) % record_every == 0 {
            let log_den = 0.5 * (weight * integral).ln_1p();
            out.push(x0 * (exponent - log_den).exp());
        }
    }
    Ok(out)
}

/// Closed-form geometric Brownian motion `x0 exp((a - b^2/2) t + b W(t))`.
pub fn exact_gbm_path(x0: f64, a: f64, b: f64, grid: &BrownianGrid, record_every: usize) -> Result<Vec<f64>> {
    if !(x0.is_finite() && a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("gbm inputs must be finite"));
    }
    if record_every == 0 {
        return Err(Error::invalid("record_every must be at least 1"));
    }
    let h = grid.h();
    let drift = a - 0.5 * b * b;
    let mut out = Vec::with_capacity(grid.n_steps() / record_every + 1);
    out.push(x0);
    let mut w = 0.0;
    for (k, dw) in grid.increments().iter().enumerate() {
        w += dw;
        if (k + 1) % record_every == 0 {
            let t = (k + 1) as f64 * h;
            out.push(x0 * (drift * t + b * w).exp());
        }
    }
    Ok(out)
}
