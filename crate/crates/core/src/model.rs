//! SDE models `dx = f(x) dt + g(x) dW` driven by a scalar Brownian motion.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Writes `F(x)` into the output slice; both slices have length `dim`.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Writes the row-major `dim x dim` Jacobian of the drift at `x`.
pub type JacobianField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Scalar polynomial term allowed on the right-hand side of the diffusion
/// structure condition.
pub type ResidualPoly = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

pub type Params = BTreeMap<String, f64>;

#[derive(Clone)]
pub struct SdeModel {
    name: String,
    dim: usize,
    drift: VectorField,
    diffusion: VectorField,
    drift_jacobian: Option<JacobianField>,
    growth_q: f64,
    params: Params,
    step_limit: Option<f64>,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("growth_q", &self.growth_q)
            .field("params", &self.params)
            .field("analytic_jacobian", &self.drift_jacobian.is_some())
            .field("step_limit", &self.step_limit)
            .finish()
    }
}

impl SdeModel {
    pub fn new<F, G>(name: impl Into<String>, dim: usize, drift: F, diffusion: G) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        Ok(Self {
            name: name.into(),
            dim,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            drift_jacobian: None,
            growth_q: 1.0,
            params: Params::new(),
            step_limit: None,
        })
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.drift_jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_growth(mut self, q: f64) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::invalid(format!("growth exponent must be >= 1, got {q}")));
        }
        self.growth_q = q;
        Ok(self)
    }

    pub fn with_params(mut self, params: Params) -> Self {
        self.params = params;
        self
    }

    /// Largest step accepted by the implicit scheme.
    pub fn with_step_limit(mut self, h_max: f64) -> Self {
        self.step_limit = Some(h_max);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth_q(&self) -> f64 {
        self.growth_q
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    pub fn step_limit(&self) -> Option<f64> {
        self.step_limit
    }

    pub fn has_jacobian(&self) -> bool {
        self.drift_jacobian.is_some()
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        (self.drift)(x, out)
    }

    #[inline]
    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        (self.diffusion)(x, out)
    }

    /// Analytic drift Jacobian, if the model provides one. Returns `false` otherwise.
    #[inline]
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.drift_jacobian {
            Some(jac) => {
                jac(x, out);
                true
            }
            None => false,
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.diffusion_into(x, &mut out);
        out
    }
}

/// Constants a model claims for the growth, monotonicity and diffusion
/// structure conditions. `lipschitz` is the polynomial Lipschitz constant of the
/// drift and `shift` the positive constant added to `|x|^2` in the
/// denominators of the diffusion structure condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConstants {
    pub lipschitz: f64,
    pub l1: f64,
    pub l2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub k1: f64,
    pub k2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub shift: f64,
    pub p_star: f64,
    pub h_star: f64,
}

impl AssumptionConstants {
    /// Checks the side conditions on the constants for growth exponent `q`.
    pub fn validate(&self, q: f64) -> Result<()> {
        let positive = [
            ("lipschitz", self.lipschitz),
            ("c1", self.c1),
            ("c3", self.c3),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("shift", self.shift),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.c2 >= 0.0) {
            return Err(Error::invalid(format!("c2 must be non-negative, got {}", self.c2)));
        }
        if self.l1 < (2.0 * q).max(3.0) {
            return Err(Error::invalid(format!("l1 = {} is below max(2q, 3) for q = {q}", self.l1)));
        }
        if self.l2 < 3.0 {
            return Err(Error::invalid(format!("l2 = {} is below 3", self.l2)));
        }
        for (name, value) in [("p_star", self.p_star), ("h_star", self.h_star)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {value}")));
            }
        }
        Ok(())
    }

    /// Implicit step bound: the implicit equation is uniquely solvable for
    /// h < 1/c1, and the moment estimates use h <= 1/(2 c1).
    pub fn step_bound(c1: f64) -> f64 {
        (1.0 / (2.0 * c1)).min(0.999)
    }
}

#[derive(Clone)]
pub struct BuiltinModel {
    pub model: SdeModel,
    pub constants: Option<AssumptionConstants>,
    pub residual: Option<ResidualPoly>,
}

impl fmt::Debug for BuiltinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BuiltinModel")
            .field("model", &self.model)
            .field("constants", &self.constants)
            .field("residual", &self.residual.is_some())
            .finish()
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["ginzburg_landau", "quintic_2d", "gbm"];

fn take_params(name: &str, params: &Params, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(key) => Err(Error::invalid(format!("model {name} has no parameter `{key}`"))),
        None => Ok(()),
    }
}

pub fn builtin_model(name: &str, params: &Params) -> Result<BuiltinModel> {
    match name {
        "ginzburg_landau" => ginzburg_landau(params),
        "quintic_2d" => quintic_2d(params),
        "gbm" => gbm(params),
        other => Err(Error::NotFound(format!(
            "unknown model `{other}` (known: {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

fn ginzburg_landau(params: &Params) -> Result<BuiltinModel> {
    take_params("ginzburg_landau", params, &["alpha", "sigma"])?;
    let alpha = params.get("alpha").copied().unwrap_or(-0.25);
    let sigma = params.get("sigma").copied().unwrap_or(1.0);
    let linear = alpha + 0.5 * sigma * sigma;

    let mut resolved = Params::new();
    resolved.insert("alpha".into(), alpha);
    resolved.insert("sigma".into(), sigma);

    let model = SdeModel::new(
        "ginzburg_landau",
        1,
        move |x, out| out[0] = linear * x[0] - x[0] * x[0] * x[0],
        move |x, out| out[0] = sigma * x[0],
    )?
    .with_jacobian(move |x, out| out[0] = linear - 3.0 * x[0] * x[0])
    .with_growth(3.0)?
    .with_params(resolved);

    // The published constants belong to alpha = -1/4, sigma = 1 only.
    if alpha != -0.25 || sigma != 1.0 {
        return Ok(BuiltinModel {
            model,
            constants: None,
            residual: None,
        });
    }

    let constants = AssumptionConstants {
        lipschitz: 1.5,
        l1: 10.0,
        l2: 3.0,
        c1: 10.5,
        c2: 0.0,
        c3: 3.5,
        k1: -10.75,
        k2: -3.75,
        alpha: 0.01,
        beta: 0.01,
        shift: 1.0,
        p_star: 0.001,
        h_star: AssumptionConstants::step_bound(10.5),
    };
    constants.validate(3.0)?;

    // With g(x) = sigma x and den = D + a x^2, a = 1 + alpha_as sigma^2,
    //   (LHS - k1) den^2 = -k1 D^2 + [(1 - l1) sigma^2 D - 2 k1 a D] x^2
    //                    + [(1 - l1) sigma^2 a - 2 sigma^2 - k1 a^2] x^4.
    // The quartic coefficient is negative for these constants, so the
    // constant and quadratic terms bound the residual.
    let d = constants.shift;
    let a = 1.0 + constants.alpha * sigma * sigma;
    let p0 = -constants.k1 * d * d;
    let p2 = ((1.0 - constants.l1) * sigma * sigma * d - 2.0 * constants.k1 * a * d).max(0.0);
    let residual: ResidualPoly = Arc::new(move |x: &[f64]| p0 + p2 * x[0] * x[0]);

    Ok(BuiltinModel {
        model: model.with_step_limit(constants.h_star),
        constants: Some(constants),
        residual: Some(residual),
    })
}

fn quintic_2d(params: &Params) -> Result<BuiltinModel> {
    take_params("quintic_2d", params, &[])?;
    let model = SdeModel::new(
        "quintic_2d",
        2,
        |x, out| {
            let (a, b) = (x[0], x[1]);
            let (a3, b3) = (a * a * a, b * b * b);
            out[0] = 1.0 + 0.1 * a - b - 21.0 * a3 - 21.0 * a3 * a * a;
            out[1] = 1.0 + a + 0.1 * b - 21.0 * b3 - 21.0 * b3 * b * b;
        },
        |x, out| {
            let (a, b) = (x[0], x[1]);
            let (a3, b3) = (a * a * a, b * b * b);
            out[0] = a - 0.2 * b + a3 - 0.2 * b3;
            out[1] = 0.2 * a + b + 0.2 * a3 + b3;
        },
    )?
    .with_jacobian(|x, out| {
        let (a2, b2) = (x[0] * x[0], x[1] * x[1]);
        out[0] = 0.1 - 63.0 * a2 - 105.0 * a2 * a2;
        out[1] = -1.0;
        out[2] = 1.0;
        out[3] = 0.1 - 63.0 * b2 - 105.0 * b2 * b2;
    })
    .with_growth(5.0)?;

    let constants = AssumptionConstants {
        lipschitz: 40.0,
        l1: 20.0,
        l2: 5.0,
        c1: 20.5,
        c2: 10.0,
        c3: 5.5,
        k1: -21.0,
        k2: -6.0,
        alpha: 0.025,
        beta: 0.025,
        shift: 1.0,
        p_star: 0.001,
        h_star: AssumptionConstants::step_bound(20.5),
    };
    constants.validate(5.0)?;

    Ok(BuiltinModel {
        model: model.with_step_limit(constants.h_star),
        constants: Some(constants),
        residual: None,
    })
}

fn gbm(params: &Params) -> Result<BuiltinModel> {
    take_params("gbm", params, &["a", "b"])?;
    let get = |key: &str| {
        params
            .get(key)
            .copied()
            .ok_or_else(|| Error::invalid(format!("model gbm requires parameter `{key}`")))
    };
    let a = get("a")?;
    let b = get("b")?;
    let model = SdeModel::new("gbm", 1, move |x, out| out[0] = a * x[0], move |x, out| out[0] = b * x[0])?
        .with_jacobian(move |_, out| out[0] = a)
        .with_params(params.clone());
    Ok(BuiltinModel {
        model,
        constants: None,
        residual: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, f64)]) -> Params {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn ginzburg_landau_defaults() {
        let gl = builtin_model("ginzburg_landau", &Params::new()).unwrap();
        // (alpha + sigma^2 / 2) x - x^3 at x = 1
        assert!((gl.model.drift(&[1.0])[0] - (-0.75)).abs() < 1e-15);
        assert_eq!(gl.model.diffusion(&[2.0]), vec![2.0]);
        let c = gl.constants.unwrap();
        assert_eq!((c.l1, c.l2, c.c1, c.c2, c.c3), (10.0, 3.0, 10.5, 0.0, 3.5));
        assert_eq!((c.k1, c.k2, c.lipschitz), (-10.75, -3.75, 1.5));
        assert_eq!(gl.model.growth_q(), 3.0);
        assert!(gl.model.has_jacobian());
    }

    #[test]
    fn quintic_constants() {
        let q = builtin_model("quintic_2d", &Params::new()).unwrap();
        let c = q.constants.unwrap();
        assert_eq!((c.c3, c.k2), (5.5, -6.0));
        assert!(c.k2 + c.c3 < 0.0);
        assert_eq!(q.model.dim(), 2);
        // f(1, 1) = (1 + 0.1 - 1 - 42, 1 + 1 + 0.1 - 42)
        let f = q.model.drift(&[1.0, 1.0]);
        assert!((f[0] - (-41.9)).abs() < 1e-12);
        assert!((f[1] - (-39.9)).abs() < 1e-12);
    }

    #[test]
    fn quintic_jacobian_matches_central_differences() {
        let m = builtin_model("quintic_2d", &Params::new()).unwrap().model;
        let x = [0.3, -0.7];
        let mut jac = [0.0; 4];
        m.jacobian_into(&x, &mut jac);
        let eps = 1e-6;
        for j in 0..2 {
            let mut up = x;
            let mut down = x;
            up[j] += eps;
            down[j] -= eps;
            let (fu, fd) = (m.drift(&up), m.drift(&down));
            for i in 0..2 {
                let fd_ij = (fu[i] - fd[i]) / (2.0 * eps);
                assert!((fd_ij - jac[i * 2 + j]).abs() < 1e-6, "({i},{j})");
            }
        }
    }

    #[test]
    fn degenerate_gbm() {
        let m = builtin_model("gbm", &params(&[("a", 0.0), ("b", 0.0)])).unwrap().model;
        assert_eq!(m.drift(&[3.0]), vec![0.0]);
        assert_eq!(m.diffusion(&[3.0]), vec![0.0]);
    }

    #[test]
    fn lookup_errors() {
        assert!(matches!(builtin_model("lorenz", &Params::new()), Err(Error::NotFound(_))));
        assert!(matches!(builtin_model("gbm", &params(&[("a", 1.0)])), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            builtin_model("quintic_2d", &params(&[("a", 1.0)])),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn custom_gl_params_drop_constants() {
        let gl = builtin_model("ginzburg_landau", &params(&[("alpha", 0.5)])).unwrap();
        assert!(gl.constants.is_none());
        assert!(gl.model.step_limit().is_none());
        assert!((gl.model.drift(&[1.0])[0] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn side_conditions() {
        let c = builtin_model("ginzburg_landau", &Params::new()).unwrap().constants.unwrap();
        assert!(c.validate(3.0).is_ok());
        assert!(c.validate(6.0).is_err());
        let mut bad = c;
        bad.l2 = 2.0;
        assert!(bad.validate(3.0).is_err());
    }
}
