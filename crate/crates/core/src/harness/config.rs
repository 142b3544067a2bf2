//! Flat `key = value` experiment configs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::ensemble::step_count;
use crate::integrators::Scheme;
use crate::model::Params;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    StrongError,
    Attractivity,
    MomentBound,
    Stationary,
    Assumptions,
    GbmDichotomy,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::StrongError => "strong_error",
            Experiment::Attractivity => "attractivity",
            Experiment::MomentBound => "moment_bound",
            Experiment::Stationary => "stationary",
            Experiment::Assumptions => "assumptions",
            Experiment::GbmDichotomy => "gbm_dichotomy",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "strong_error" => Experiment::StrongError,
            "attractivity" => Experiment::Attractivity,
            "moment_bound" => Experiment::MomentBound,
            "stationary" => Experiment::Stationary,
            "assumptions" => Experiment::Assumptions,
            "gbm_dichotomy" => Experiment::GbmDichotomy,
            other => return Err(Error::config("experiment", format!("unknown experiment `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: String,
    pub params: Params,
    pub x0: Vec<f64>,
    pub y0: Option<Vec<f64>>,
    pub p: f64,
    pub h: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub record_every: usize,
    /// `auto`, `exact_gl`, `exact_gbm` or `fine_bem`.
    pub oracle: String,
    pub oracle_refine: usize,
    /// Defaults to the horizon.
    pub reference_time: Option<f64>,
    pub output_dir: PathBuf,
    pub scheme: Scheme,
    pub burn_in: f64,
    pub workers: Option<usize>,
    pub radius: f64,
    pub n_random: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults: x0 = 1, h = 0.001, horizon 50, 500 paths.
    pub fn new(experiment: Experiment, model: impl Into<String>) -> Self {
        Self {
            experiment,
            model: model.into(),
            params: Params::new(),
            x0: vec![1.0],
            y0: None,
            p: 0.001,
            h: 0.001,
            horizon: 50.0,
            n_paths: 500,
            seed: 1,
            record_every: 100,
            oracle: "auto".into(),
            oracle_refine: 16,
            reference_time: None,
            output_dir: PathBuf::from("out"),
            scheme: Scheme::Bem,
            burn_in: 1.0,
            workers: None,
            radius: 10.0,
            n_random: 10_000,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`"))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let get = |k: &str| pairs.iter().rev().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let experiment = get("experiment").ok_or_else(|| Error::config("experiment", "missing"))?.parse()?;
        let model = get("model").ok_or_else(|| Error::config("model", "missing"))?;
        let mut cfg = Self::new(experiment, model);

        for (key, value) in &pairs {
            let v = value.as_str();
            match key.as_str() {
                "experiment" | "model" => {}
                "x0" => cfg.x0 = parse_vector(key, v)?,
                "y0" => cfg.y0 = Some(parse_vector(key, v)?),
                "p" => cfg.p = parse_num(key, v)?,
                "h" => cfg.h = parse_num(key, v)?,
                "horizon" => cfg.horizon = parse_num(key, v)?,
                "n_paths" => cfg.n_paths = parse_num(key, v)?,
                "seed" => cfg.seed = parse_num(key, v)?,
                "record_every" => cfg.record_every = parse_num(key, v)?,
                "oracle" => cfg.oracle = v.to_string(),
                "oracle_refine" => cfg.oracle_refine = parse_num(key, v)?,
                "reference_time" => cfg.reference_time = Some(parse_num(key, v)?),
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "scheme" => cfg.scheme = v.parse().map_err(|_| Error::config(key, format!("unknown scheme `{v}`")))?,
                "burn_in" => cfg.burn_in = parse_num(key, v)?,
                "workers" => cfg.workers = Some(parse_num(key, v)?),
                "radius" => cfg.radius = parse_num(key, v)?,
                "n_random" => cfg.n_random = parse_num(key, v)?,
                k if k.starts_with("param.") => {
                    cfg.params.insert(k["param.".len()..].to_string(), parse_num(key, v)?);
                }
                other => return Err(Error::config(other, "unknown key")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Switches to the full-size runs: 1000 paths, and horizon 200 for the
    /// strong-error experiment.
    pub fn paper_scale(&mut self) {
        self.n_paths = 1000;
        if self.experiment == Experiment::StrongError {
            self.horizon = 200.0;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment == Experiment::Assumptions {
            if !(self.radius > 1e-3 && self.radius.is_finite()) {
                return Err(Error::config("radius", format!("must exceed 1e-3, got {}", self.radius)));
            }
            return Ok(());
        }
        if self.x0.is_empty() || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("x0", "must be a non-empty finite vector"));
        }
        if let Some(y0) = &self.y0 {
            if y0.len() != self.x0.len() || y0.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("y0", "must be finite and match the length of x0"));
            }
        } else if self.experiment == Experiment::Attractivity {
            return Err(Error::config("y0", "required by the attractivity experiment"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::config("h", format!("must be positive, got {}", self.h)));
        }
        let n = step_count(self.horizon, self.h).map_err(|e| Error::config("horizon", e.to_string()))?;
        if n == 0 {
            return Err(Error::config("horizon", "must cover at least one step"));
        }
        if self.n_paths < 2 {
            return Err(Error::config("n_paths", format!("must be at least 2, got {}", self.n_paths)));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every", "must be at least 1"));
        }
        if !(self.p > 0.0 && self.p <= 2.0) {
            return Err(Error::config("p", format!("must lie in (0, 2], got {}", self.p)));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if let Some(t) = self.reference_time {
            if !(t >= 0.0 && t <= self.horizon) {
                return Err(Error::config("reference_time", format!("must lie in [0, {}]", self.horizon)));
            }
        }
        let uses_burn_in = matches!(self.experiment, Experiment::StrongError | Experiment::GbmDichotomy);
        if uses_burn_in && !(self.burn_in >= 0.0 && self.burn_in < self.horizon) {
            return Err(Error::config("burn_in", format!("must lie in [0, {})", self.horizon)));
        }
        Ok(())
    }

    /// Canonical `key = value` rendering, parseable by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("experiment = {}", self.experiment),
            format!("model = {}", self.model),
        ];
        for (k, v) in &self.params {
            lines.push(format!("param.{k} = {v:?}"));
        }
        lines.push(format!("x0 = {}", join(&self.x0)));
        if let Some(y0) = &self.y0 {
            lines.push(format!("y0 = {}", join(y0)));
        }
        lines.push(format!("p = {:?}", self.p));
        lines.push(format!("h = {:?}", self.h));
        lines.push(format!("horizon = {:?}", self.horizon));
        lines.push(format!("n_paths = {}", self.n_paths));
        lines.push(format!("seed = {}", self.seed));
        lines.push(format!("record_every = {}", self.record_every));
        lines.push(format!("oracle = {}", self.oracle));
        lines.push(format!("oracle_refine = {}", self.oracle_refine));
        if let Some(t) = self.reference_time {
            lines.push(format!("reference_time = {t:?}"));
        }
        lines.push(format!("output_dir = {}", self.output_dir.display()));
        lines.push(format!("scheme = {}", self.scheme));
        lines.push(format!("burn_in = {:?}", self.burn_in));
        if let Some(w) = self.workers {
            lines.push(format!("workers = {w}"));
        }
        lines.push(format!("radius = {:?}", self.radius));
        lines.push(format!("n_random = {}", self.n_random));
        lines.join("\n") + "\n"
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn parse_num<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(field, format!("cannot parse `{value}`")))
}

fn parse_vector(field: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(field, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "\
# uniform-in-time error
experiment = strong_error
model = ginzburg_landau
param.alpha = -0.25   # drift shift
x0 = 1
p = 0.001
h = 0.001
horizon = 50
n_paths = 500
";

    fn field_of(err: Error) -> String {
        match err {
            Error::InvalidConfig { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn parses_flat_file() {
        let cfg = ExperimentConfig::parse(EXAMPLE).unwrap();
        assert_eq!(cfg.experiment, Experiment::StrongError);
        assert_eq!(cfg.model, "ginzburg_landau");
        assert_eq!(cfg.params["alpha"], -0.25);
        assert_eq!(cfg.x0, vec![1.0]);
        assert_eq!(cfg.n_paths, 500);
        assert_eq!(cfg.oracle, "auto");
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::parse(EXAMPLE).unwrap();
        cfg.y0 = Some(vec![0.5]);
        cfg.workers = Some(3);
        cfg.reference_time = Some(5.0);
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn non_integral_steps_name_horizon() {
        let text = "experiment = strong_error\nmodel = ginzburg_landau\nhorizon = 1\nh = 0.3\n";
        assert_eq!(field_of(ExperimentConfig::parse(text).unwrap_err()), "horizon");
    }

    #[test]
    fn bad_fields_are_named() {
        let base = "experiment = strong_error\nmodel = ginzburg_landau\n";
        for (extra, field) in [
            ("n_paths = 1", "n_paths"),
            ("p = 3", "p"),
            ("h = abc", "h"),
            ("colour = red", "colour"),
            ("scheme = rk4", "scheme"),
            ("workers = 0", "workers"),
        ] {
            let err = ExperimentConfig::parse(&format!("{base}{extra}\n")).unwrap_err();
            assert_eq!(field_of(err), field, "{extra}");
        }
        assert_eq!(field_of(ExperimentConfig::parse("model = x\n").unwrap_err()), "experiment");
        assert_eq!(
            field_of(ExperimentConfig::parse("experiment = attractivity\nmodel = gbm\n").unwrap_err()),
            "y0"
        );
    }

    #[test]
    fn paper_scale_only_extends_strong_error() {
        let mut cfg = ExperimentConfig::parse(EXAMPLE).unwrap();
        cfg.paper_scale();
        assert_eq!((cfg.n_paths, cfg.horizon), (1000, 200.0));
        let mut st = ExperimentConfig::new(Experiment::Stationary, "quintic_2d");
        st.horizon = 5.0;
        st.paper_scale();
        assert_eq!((st.n_paths, st.horizon), (1000, 5.0));
    }
}
