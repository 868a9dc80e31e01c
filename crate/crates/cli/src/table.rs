//! Long-format result tables, CSV emission and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Token(String),
}

impl Cell {
    fn render(&self) -> Option<String> {
        match self {
            // Display gives the shortest string that round-trips
            Cell::Num(v) if v.is_finite() => Some(format!("{v}")),
            Cell::Num(_) => None,
            Cell::Int(v) => Some(v.to_string()),
            Cell::Token(s) => Some(s.clone()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Token(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Token(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Token(if v { "true" } else { "false" }.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header of {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Column index by header name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Rows whose cells all render; the rest are counted as dropped.
    pub fn rendered(&self) -> (Vec<Vec<String>>, usize) {
        let mut kept = Vec::with_capacity(self.rows.len());
        let mut dropped = 0;
        for row in &self.rows {
            match row.iter().map(Cell::render).collect::<Option<Vec<_>>>() {
                Some(r) => kept.push(r),
                None => dropped += 1,
            }
        }
        (kept, dropped)
    }

    pub fn write_csv(&self, dir: &Path) -> Result<FileRecord, CliError> {
        let path = dir.join(self.file_name());
        let (rows, dropped) = self.rendered();
        let out_err = |e: &dyn std::fmt::Display| CliError::OutDir { path: path.clone(), reason: e.to_string() };
        let mut w = csv::Writer::from_path(&path).map_err(|e| out_err(&e))?;
        w.write_record(&self.header).map_err(|e| out_err(&e))?;
        for r in &rows {
            w.write_record(r).map_err(|e| out_err(&e))?;
        }
        w.flush().map_err(|e| out_err(&e))?;
        if dropped > 0 {
            eprintln!("warning: {} dropped {dropped} row(s) with non-finite values", self.file_name());
        }
        Ok(FileRecord { file: self.file_name(), rows: rows.len(), dropped_nonfinite: dropped })
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FileRecord {
    pub file: String,
    pub rows: usize,
    pub dropped_nonfinite: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub trials: usize,
    pub workers: usize,
    pub timestamp_unix: u64,
    pub parameters: serde_json::Value,
    pub config: serde_json::Value,
    pub files: Vec<FileRecord>,
}

/// Creates `dir` and checks that a file can be written there.
pub fn prepare_out_dir(dir: &Path) -> Result<PathBuf, CliError> {
    let err = |e: std::io::Error| CliError::OutDir { path: dir.to_path_buf(), reason: e.to_string() };
    fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(".cellfree-write-check");
    fs::write(&probe, b"").map_err(err)?;
    fs::remove_file(&probe).map_err(err)?;
    Ok(dir.to_path_buf())
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::OutDir { path, reason: e.to_string() })
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
