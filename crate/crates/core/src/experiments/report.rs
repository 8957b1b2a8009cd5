use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::extended::Extended;

use super::{ExperimentKind, ExperimentSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Ext(Extended),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Ext(e) => Some(e.to_f64()),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write_float(f, *v),
            Cell::Ext(Extended::Finite(v)) => write_float(f, *v),
            Cell::Ext(Extended::Unbounded) => f.write_str("inf"),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

/// Shortest round-trip digits, switching to exponent form for very large
/// or very small magnitudes.
fn write_float(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.is_infinite() {
        f.write_str(if v > 0.0 { "inf" } else { "-inf" })
    } else if v != 0.0 && (v.abs() >= 1e16 || v.abs() < 1e-5) {
        write!(f, "{v:e}")
    } else {
        write!(f, "{v}")
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Extended> for Cell {
    fn from(v: Extended) -> Self {
        Cell::Ext(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub seed: u64,
    pub spec_hash: String,
    pub version: String,
    pub spec_json: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub metadata: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Seconds per row, written as the last column.
    pub wall_times: Vec<f64>,
    pub violations: Vec<String>,
    pub summary: Vec<(String, String)>,
    /// Set when a row failed; the rows before it are kept.
    pub failure: Option<Error>,
    /// Additional output files as (name, contents).
    pub extra_files: Vec<(String, String)>,
}

impl ExperimentReport {
    pub fn new(spec: &ExperimentSpec, columns: &[&str]) -> Self {
        Self {
            kind: spec.kind,
            metadata: Metadata {
                seed: spec.seed,
                spec_hash: spec.hash(),
                version: env!("CARGO_PKG_VERSION").to_owned(),
                spec_json: spec.to_json(),
            },
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
            wall_times: Vec::new(),
            violations: Vec::new(),
            summary: Vec::new(),
            failure: None,
            extra_files: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>, wall_time: f64) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
        self.wall_times.push(wall_time);
    }

    pub fn violation(&mut self, message: String) {
        log::warn!("{}: {message}", self.kind);
        self.violations.push(message);
    }

    pub fn summarize(&mut self, key: &str, value: impl fmt::Display) {
        self.summary.push((key.to_owned(), value.to_string()));
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of a numeric column, `None` for blank or text cells.
    pub fn values(&self, name: &str) -> Vec<Option<f64>> {
        match self.column(name) {
            Some(i) => self.rows.iter().map(|r| r[i].as_f64()).collect(),
            None => Vec::new(),
        }
    }

    fn render(&self, with_wall_time: bool) -> String {
        let mut out = String::new();
        out.push_str("# metadata\n");
        out.push_str(&format!("# kind={}\n", self.kind));
        out.push_str(&format!("# seed={}\n", self.metadata.seed));
        out.push_str(&format!("# spec_hash={}\n", self.metadata.spec_hash));
        out.push_str(&format!("# version={}\n", self.metadata.version));
        out.push_str(&format!("# spec={}\n", self.metadata.spec_json));
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        if with_wall_time {
            header.push("wall_time");
        }
        w.write_record(&header).expect("in-memory write");
        for (row, t) in self.rows.iter().zip(&self.wall_times) {
            let mut fields: Vec<String> = row.iter().map(Cell::to_string).collect();
            if with_wall_time {
                fields.push(format!("{t:.6}"));
            }
            w.write_record(&fields).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields"));
        for (k, v) in &self.summary {
            out.push_str(&format!("# summary {k}={v}\n"));
        }
        for v in &self.violations {
            out.push_str(&format!("# violation {v}\n"));
        }
        if let Some(err) = &self.failure {
            out.push_str(&format!("# partial: aborted after {} rows: {err}\n", self.rows.len()));
        }
        out
    }

    pub fn csv(&self) -> String {
        self.render(true)
    }

    /// The CSV without the wall-time column; identical across runs of the
    /// same spec.
    pub fn deterministic_csv(&self) -> String {
        self.render(false)
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        let main = std::iter::once((self.kind.output_file().to_owned(), self.csv()));
        for (name, contents) in main.chain(self.extra_files.iter().cloned()) {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}
