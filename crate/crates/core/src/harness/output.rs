//! Column tables, plot-data files and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::estimators::{DistanceSeries, ErrorSeries, MomentSeries};
use crate::{Error, Result};

/// Named columns of equal length; the first column is time.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() || names.is_empty() {
            return Err(Error::invalid("one name per column is required"));
        }
        if columns.iter().any(|c| c.len() != columns[0].len()) {
            return Err(Error::invalid("columns must have equal length"));
        }
        Ok(Self { names, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn to_csv(&self) -> String {
        self.render(",", "")
    }

    /// Whitespace-separated rows under a `#` header line.
    pub fn to_gnuplot(&self) -> String {
        self.render(" ", "# ")
    }

    fn render(&self, sep: &str, header_prefix: &str) -> String {
        let mut out = format!("{header_prefix}{}\n", self.names.join(sep));
        for r in 0..self.n_rows() {
            let row: Vec<String> = self.columns.iter().map(|c| format!("{:.16e}", c[r])).collect();
            out.push_str(&row.join(sep));
            out.push('\n');
        }
        out
    }

    /// Parses either rendering back into a table.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::invalid("empty table"))?;
        let split = |l: &str| -> Vec<String> {
            l.trim_start_matches('#')
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        };
        let names = split(header);
        let mut columns = vec![Vec::new(); names.len()];
        for line in lines {
            let cells = split(line);
            if cells.len() != names.len() {
                return Err(Error::invalid(format!("row `{line}` has {} cells, expected {}", cells.len(), names.len())));
            }
            for (col, cell) in columns.iter_mut().zip(&cells) {
                col.push(cell.parse().map_err(|_| Error::invalid(format!("bad number `{cell}`")))?);
            }
        }
        Table::new(names, columns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Error,
    Ks,
    Moment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Gnuplot,
    Csv,
}

pub enum PlotSeries<'a> {
    Error(&'a ErrorSeries),
    Distance(&'a DistanceSeries),
    Moment(&'a MomentSeries),
}

/// `t, raw_p_error, stderr, normalized`.
pub fn error_table(s: &ErrorSeries) -> Table {
    Table {
        names: ["t", "raw_p_error", "stderr", "normalized"].map(String::from).to_vec(),
        columns: vec![s.times.clone(), s.raw.clone(), s.stderrs.clone(), s.normalized.clone()],
    }
}

/// `t, ks_dim1..ks_dimD, w1_dim1..w1_dimD`.
pub fn distance_table(s: &DistanceSeries) -> Table {
    let mut names = vec!["t".to_string()];
    let mut columns = vec![s.times.clone()];
    for c in 0..s.dim {
        names.push(format!("ks_dim{}", c + 1));
        columns.push(s.ks_column(c));
    }
    for c in 0..s.dim {
        names.push(format!("w1_dim{}", c + 1));
        columns.push((0..s.times.len()).map(|t| s.w1_at(t, c)).collect());
    }
    Table { names, columns }
}

/// `t, moment, stderr`.
pub fn moment_table(s: &MomentSeries) -> Table {
    Table {
        names: ["t", "moment", "stderr"].map(String::from).to_vec(),
        columns: vec![s.times.clone(), s.values.clone(), s.stderrs.clone()],
    }
}

/// Writes `(t, value[, stderr])` data for plotting; K-S data gets one column per
/// marginal.
pub fn emit_plot_data(series: PlotSeries<'_>, kind: PlotKind, format: PlotFormat, path: &Path) -> Result<()> {
    let table = match (series, kind) {
        (PlotSeries::Error(s), PlotKind::Error) => Table {
            names: ["t", "normalized", "stderr"].map(String::from).to_vec(),
            columns: vec![
                s.times.clone(),
                s.normalized.clone(),
                s.stderrs.iter().map(|e| e / s.h.powf(s.p / 2.0)).collect(),
            ],
        },
        (PlotSeries::Distance(s), PlotKind::Ks) => {
            let mut t = distance_table(s);
            t.names.truncate(s.dim + 1);
            t.columns.truncate(s.dim + 1);
            t
        }
        (PlotSeries::Moment(s), PlotKind::Moment) => moment_table(s),
        _ => return Err(Error::invalid("plot kind does not match the series type")),
    };
    let text = match format {
        PlotFormat::Gnuplot => table.to_gnuplot(),
        PlotFormat::Csv => table.to_csv(),
    };
    write_file(path, text.as_bytes())
}

pub fn parse_plot_data(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Table::parse(&text)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record of one run, rendered as `key: value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: String,
    pub code_version: String,
    pub wall_time_s: f64,
    pub n_paths: usize,
    pub n_diverged: usize,
    /// `(file name, sha256)` for every emitted output.
    pub outputs: Vec<(String, String)>,
    /// Experiment-specific scalars such as fitted rates.
    pub summary: Vec<(String, String)>,
    /// Conditions that make the run fail: unreliable series, failed checks.
    pub flags: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn success(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "code_version: {}", self.code_version);
        let _ = writeln!(out, "wall_time_s: {:.3}", self.wall_time_s);
        let _ = writeln!(out, "n_paths: {}", self.n_paths);
        let _ = writeln!(out, "n_diverged: {}", self.n_diverged);
        let _ = writeln!(out, "status: {}", if self.success() { "ok" } else { "flagged" });
        for (k, v) in &self.summary {
            let _ = writeln!(out, "summary.{k}: {v}");
        }
        for f in &self.flags {
            let _ = writeln!(out, "flag: {f}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        for (name, hash) in &self.outputs {
            let _ = writeln!(out, "output: {name} sha256={hash}");
        }
        for line in self.config.lines() {
            if let Some((k, v)) = line.split_once('=') {
                let _ = writeln!(out, "config.{}: {}", k.trim(), v.trim());
            }
        }
        out
    }

    /// Writes `manifest.txt` into `dir` via a temporary file and a rename.
    pub fn write_atomic(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.txt");
        let tmp = dir.join(".manifest.txt.tmp");
        write_file(&tmp, self.to_text().as_bytes())?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table::new(
            vec!["t".into(), "value".into()],
            vec![vec![0.0, 0.5, 1.0], vec![0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300]],
        )
        .unwrap()
    }

    #[test]
    fn both_renderings_round_trip_bitwise() {
        let t = table();
        assert_eq!(Table::parse(&t.to_csv()).unwrap(), t);
        assert_eq!(Table::parse(&t.to_gnuplot()).unwrap(), t);
        let g = t.to_gnuplot();
        assert!(g.starts_with("# t value\n"));
        assert_eq!(g.lines().count(), 4);
    }

    #[test]
    fn malformed_tables_rejected() {
        assert!(Table::parse("").is_err());
        assert!(Table::parse("t,v\n1,2,3\n").is_err());
        assert!(Table::parse("t,v\n1,x\n").is_err());
        assert!(Table::new(vec!["t".into()], vec![vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_written_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            config: "experiment = strong_error\nmodel = gbm\n".into(),
            code_version: "0.1.0".into(),
            wall_time_s: 1.5,
            n_paths: 10,
            n_diverged: 0,
            outputs: vec![("a.csv".into(), sha256_hex(b""))],
            summary: vec![("flatness".into(), "1.2".into())],
            flags: vec![],
            notes: vec![],
        };
        let path = m.write_atomic(dir.path()).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert!(text.contains("status: ok\n"));
        assert!(text.contains("config.model: gbm\n"));
        assert!(!dir.path().join(".manifest.txt.tmp").exists());
    }

    #[test]
    fn io_errors_carry_path() {
        let err = write_file(Path::new("/nonexistent-dir/x.csv"), b"").unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
