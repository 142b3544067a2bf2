//! Config-driven experiments, CSV artifacts and run manifests.

pub mod config;
pub mod fit;
pub mod output;
pub mod run;

pub use config::{Experiment, ExperimentConfig};
pub use fit::{fit_order, flatness_metric, window_flatness, OrderFit};
pub use output::{emit_plot_data, parse_plot_data, PlotFormat, PlotKind, PlotSeries, RunManifest, Table};
pub use run::{order_study, parse_ladder, run, OrderPoint, OrderSettings, OrderStudy};
