//! Backward Euler-Maruyama for SDEs with superlinear coefficients, plus the
//! Monte Carlo machinery used to check its long-time behaviour: uniform-in-time
//! strong error, moment bounds, attractivity of coupled solutions, and
//! convergence of the empirical law towards the stationary distribution.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] and [`brownian`] define SDE models and reproducible Brownian grids.
//! * [`integrators`] holds the implicit and explicit schemes and closed-form oracles.
//! * [`estimators`] turns path ensembles into moment, error and distance series.
//! * [`assumptions`] checks the structural inequalities a model claims on a sampled domain.
//! * [`harness`] runs config-driven experiments and writes CSV artifacts.

pub mod assumptions;
pub mod brownian;
pub mod ensemble;
mod error;
pub mod estimators;
pub mod harness;
pub mod integrators;
pub mod model;
pub mod normal;
pub mod parallel;

pub use error::{Error, Result};
