//! Experiment dispatch.

use std::fs;
use std::time::Instant;

use crate::assumptions::{check_model, DomainSampler};
use crate::ensemble::{simulate_ensemble, RunSetup};
use crate::estimators::{
    attractivity_series, moment_series, stationary_distance_series, strong_error_series, ErrorSeries, Oracle,
};
use crate::harness::config::{Experiment, ExperimentConfig};
use crate::harness::fit::{fit_order, flatness_metric, OrderFit};
use crate::harness::output::{
    distance_table, emit_plot_data, error_table, sha256_hex, write_file, PlotFormat, PlotKind, PlotSeries,
    RunManifest, Table,
};
use crate::integrators::Scheme;
use crate::model::{builtin_model, Params};
use crate::{Error, Result};

/// Threshold the unstable half of the GBM experiment must cross.
pub const BLOW_UP_LEVEL: f64 = 1e6;

struct Outputs<'a> {
    cfg: &'a ExperimentConfig,
    files: Vec<(String, String)>,
}

impl Outputs<'_> {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        write_file(&self.cfg.output_dir.join(name), text.as_bytes())?;
        self.files.push((name.to_string(), sha256_hex(text.as_bytes())));
        Ok(())
    }

    fn plot(&mut self, name: &str, series: PlotSeries<'_>, kind: PlotKind) -> Result<()> {
        let path = self.cfg.output_dir.join(name);
        emit_plot_data(series, kind, PlotFormat::Gnuplot, &path)?;
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.files.push((name.to_string(), sha256_hex(&bytes)));
        Ok(())
    }
}

fn setup_of(cfg: &ExperimentConfig) -> RunSetup {
    RunSetup::new(cfg.x0.clone(), cfg.h, cfg.horizon, cfg.n_paths)
        .with_seed(cfg.seed)
        .with_record_every(cfg.record_every)
        .with_workers(cfg.workers)
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

/// Runs the configured experiment, writes its outputs and then the manifest.
/// A flagged manifest (unreliable series, failed checks) still has every output
/// on disk.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let started = Instant::now();
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let builtin = builtin_model(&cfg.model, &cfg.params)?;
    let model = &builtin.model;
    let setup = setup_of(cfg);
    let mut out = Outputs { cfg, files: Vec::new() };
    let mut summary = Vec::new();
    let mut flags = Vec::new();
    let mut notes = Vec::new();
    let mut n_diverged = 0;
    let mut n_paths = cfg.n_paths;

    let unreliable_flag = |n: usize| format!("{n} of {} paths diverged (more than 1%)", cfg.n_paths);

    match cfg.experiment {
        Experiment::StrongError | Experiment::GbmDichotomy => {
            if cfg.experiment == Experiment::GbmDichotomy && cfg.model != "gbm" {
                return Err(Error::config("model", "the dichotomy experiment runs on gbm"));
            }
            let oracle = Oracle::for_model(&cfg.oracle, model).map_err(|e| Error::config("oracle", e.to_string()))?;
            if oracle == Oracle::FineBem {
                notes.push(format!(
                    "reference is the implicit scheme at step h/{}, not an exact solution",
                    cfg.oracle_refine
                ));
            }
            let series = strong_error_series(model, &setup, cfg.p, cfg.scheme, oracle, cfg.oracle_refine)?;
            n_diverged = series.n_diverged;
            if series.unreliable {
                flags.push(unreliable_flag(n_diverged));
            }
            write_error_outputs(&mut out, &series)?;
            let flatness = flatness_metric(&series, cfg.burn_in)?;
            summary.push(("flatness".to_string(), fmt(flatness)));
            if cfg.experiment == Experiment::GbmDichotomy {
                let a = model.param("a").unwrap_or(f64::NAN);
                let b = model.param("b").unwrap_or(f64::NAN);
                let growth = 2.0 * a + b * b;
                summary.push(("2a+b^2".to_string(), fmt(growth)));
                summary.push((
                    "regime".to_string(),
                    if growth < 0.0 { "mean-square stable" } else { "mean-square unstable" }.to_string(),
                ));
                let max = series.raw.iter().copied().fold(0.0, f64::max);
                summary.push(("max_raw_error".to_string(), fmt(max)));
                let crossing = series
                    .times
                    .iter()
                    .zip(&series.raw)
                    .find(|(_, v)| **v > BLOW_UP_LEVEL)
                    .map(|(t, _)| fmt(*t))
                    .unwrap_or_else(|| "none".to_string());
                summary.push(("first_time_above_1e6".to_string(), crossing));
            }
        }
        Experiment::Attractivity => {
            let y0 = cfg.y0.as_ref().ok_or_else(|| Error::config("y0", "required"))?;
            let s = attractivity_series(model, &setup, y0, cfg.p, cfg.scheme)?;
            n_diverged = s.series.n_diverged;
            if s.series.unreliable {
                flags.push(unreliable_flag(n_diverged));
            }
            let table = Table::new(
                ["t", "moment", "stderr", "mean_log_diff"].map(String::from).to_vec(),
                vec![s.series.times.clone(), s.series.values.clone(), s.series.stderrs.clone(), s.log_mean.clone()],
            )?;
            out.write("attractivity.csv", &table.to_csv())?;
            out.plot("attractivity.dat", PlotSeries::Moment(&s.series), PlotKind::Moment)?;
            summary.push((
                "decay_rate".to_string(),
                s.rate.map(fmt).unwrap_or_else(|| "undetermined".to_string()),
            ));
        }
        Experiment::MomentBound => {
            let ensemble = simulate_ensemble(model, cfg.scheme, &setup)?;
            n_diverged = ensemble.n_diverged();
            let s = moment_series(&ensemble, cfg.p)?;
            let second = moment_series(&ensemble, 2.0)?;
            if s.unreliable {
                flags.push(unreliable_flag(n_diverged));
            }
            let sup = s.running_sup();
            let table = Table::new(
                ["t", "moment", "stderr", "running_sup", "second_moment"].map(String::from).to_vec(),
                vec![s.times.clone(), s.values.clone(), s.stderrs.clone(), sup.clone(), second.values.clone()],
            )?;
            out.write("moments.csv", &table.to_csv())?;
            out.plot("moments.dat", PlotSeries::Moment(&s), PlotKind::Moment)?;
            summary.push(("sup_moment".to_string(), fmt(sup.last().copied().unwrap_or(f64::NAN))));
            if let Some(c) = &builtin.constants {
                let g0 = model.diffusion(&cfg.x0);
                let lead = c.shift
                    + cfg.x0.iter().map(|v| v * v).sum::<f64>()
                    + c.l1 * cfg.h * g0.iter().map(|v| v * v).sum::<f64>();
                summary.push(("leading_bound".to_string(), fmt(lead.powf(cfg.p / 2.0))));
            }
            let half = second.values.len() / 2;
            let first_max = second.values[..half].iter().copied().fold(0.0, f64::max);
            let last_max = second.values[half..].iter().copied().fold(0.0, f64::max);
            summary.push(("second_moment_max_first_half".to_string(), fmt(first_max)));
            summary.push(("second_moment_max_second_half".to_string(), fmt(last_max)));
        }
        Experiment::Stationary => {
            let reference = cfg.reference_time.unwrap_or(cfg.horizon);
            let s = stationary_distance_series(model, &setup, reference)?;
            n_diverged = s.n_diverged;
            if s.unreliable {
                flags.push(unreliable_flag(n_diverged));
            }
            out.write("ks.csv", &distance_table(&s).to_csv())?;
            out.plot("ks.dat", PlotSeries::Distance(&s), PlotKind::Ks)?;
            notes.push(format!("reference law is the ensemble itself at t = {reference}"));
        }
        Experiment::Assumptions => {
            n_paths = 0;
            let constants = builtin.constants.as_ref().ok_or_else(|| {
                Error::config("model", format!("{} carries no assumption constants for these parameters", cfg.model))
            })?;
            let sampler = DomainSampler::new(model.dim(), cfg.radius)
                .with_random(cfg.n_random)
                .with_seed(cfg.seed);
            let report = check_model(model, constants, builtin.residual.as_ref(), &sampler)?;
            out.write("assumptions.csv", &report.to_csv(model.dim()))?;
            out.write("assumptions.txt", &report.to_text(model.dim()))?;
            for e in report.entries.iter().filter(|e| !e.pass) {
                flags.push(format!("assumption check failed: {}", e.name));
            }
            notes.push("checks are evaluated on a finite sample of the domain".to_string());
        }
    }

    let manifest = RunManifest {
        config: cfg.to_text(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: started.elapsed().as_secs_f64(),
        n_paths,
        n_diverged,
        outputs: out.files,
        summary,
        flags,
        notes,
    };
    manifest.write_atomic(&cfg.output_dir)?;
    Ok(manifest)
}

fn write_error_outputs(out: &mut Outputs<'_>, series: &ErrorSeries) -> Result<()> {
    out.write("strong_error.csv", &error_table(series).to_csv())?;
    let log = Table::new(
        vec!["t".into(), "mean_log_error".into()],
        vec![series.times.clone(), series.log_mean.clone()],
    )?;
    out.write("strong_error_log.csv", &log.to_csv())?;
    out.plot("strong_error.dat", PlotSeries::Error(series), PlotKind::Error)
}

/// One rung of a step-size ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderPoint {
    pub h: f64,
    pub error: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudy {
    pub points: Vec<OrderPoint>,
    pub fit: OrderFit,
    pub oracle: Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSettings {
    pub x0: Option<Vec<f64>>,
    pub p: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub oracle_refine: usize,
    pub workers: Option<usize>,
}

impl Default for OrderSettings {
    fn default() -> Self {
        Self {
            x0: None,
            p: 2.0,
            horizon: 1.0,
            n_paths: 2000,
            seed: 1,
            oracle_refine: 16,
            workers: None,
        }
    }
}

/// Terminal strong error of BEM at each step size, and the fitted slope of
/// `ln error` against `ln h`.
pub fn order_study(model_name: &str, params: &Params, ladder: &[f64], settings: &OrderSettings) -> Result<OrderStudy> {
    let builtin = builtin_model(model_name, params)?;
    let model = &builtin.model;
    let oracle = Oracle::for_model("auto", model)?;
    let x0 = settings.x0.clone().unwrap_or_else(|| vec![1.0; model.dim()]);
    let mut points = Vec::with_capacity(ladder.len());
    for &h in ladder {
        let setup = RunSetup::new(x0.clone(), h, settings.horizon, settings.n_paths)
            .with_seed(settings.seed)
            .with_workers(settings.workers);
        let n = setup.n_steps()?;
        let setup = setup.with_record_every(n.max(1));
        let s = strong_error_series(model, &setup, settings.p, Scheme::Bem, oracle, settings.oracle_refine)?;
        if s.unreliable {
            return Err(Error::invalid(format!("{} paths diverged at h = {h}", s.n_diverged)));
        }
        let last = s.raw.len() - 1;
        points.push(OrderPoint {
            h,
            error: s.raw[last],
            stderr: s.stderrs[last],
        });
    }
    let table: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.error)).collect();
    let fit = fit_order(&table, settings.p)?;
    Ok(OrderStudy { points, fit, oracle })
}

/// Parses `2^-5..2^-9` (or `0.03125,0.015625,...`) into step sizes.
pub fn parse_ladder(text: &str) -> Result<Vec<f64>> {
    let pow = |s: &str| -> Result<i32> {
        s.trim()
            .strip_prefix("2^")
            .and_then(|e| e.parse().ok())
            .ok_or_else(|| Error::invalid(format!("expected 2^k, got `{s}`")))
    };
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (pow(a)?, pow(b)?);
        let step = if b >= a { 1 } else { -1 };
        let mut out = Vec::new();
        let mut k = a;
        loop {
            out.push(2f64.powi(k));
            if k == b {
                break;
            }
            k += step;
        }
        return Ok(out);
    }
    text.split(',')
        .map(|s| {
            let s = s.trim();
            pow(s).map(|k| 2f64.powi(k)).or_else(|_| {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad step size `{s}`")))
            })
        })
        .collect()
}
