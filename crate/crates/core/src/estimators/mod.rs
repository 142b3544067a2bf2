//! Monte Carlo estimators over path ensembles.
//!
//! The bounded-Lipschitz distance between laws is not computed directly;
//! per-coordinate Kolmogorov-Smirnov and Wasserstein-1 distances stand in
//! for it.

mod distance;
mod moments;
mod series;

pub use distance::{ks_two_sample, w1_sorted};
pub use moments::{pth_moment, Moment};
pub use series::{
    attractivity_series, fit_decay_rate, moment_series, stationary_distance_series, strong_error_series,
    AttractivitySeries, DistanceSeries, ErrorSeries, MomentSeries, Oracle,
};

/// Fraction of divergent paths above which a series is flagged unreliable.
pub const UNRELIABLE_FRACTION: f64 = 0.01;
