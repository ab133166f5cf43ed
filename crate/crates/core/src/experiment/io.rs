//! Writers and readers for the run artifacts.
//!
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, so re-reading a file reproduces the values exactly. Missing
//! values are empty cells and read back as NaN.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::conjugate::{MniwParams, SuffStats};
use crate::error::{Error, Result};

use super::config::ExperimentConfig;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const FUNCTION_GRID_CSV: &str = "function_grid.csv";
pub const ERRORS_CSV: &str = "errors.csv";
pub const POSTERIOR_JSON: &str = "posterior.json";
pub const RUN_META_JSON: &str = "run_meta.json";

pub const ALL_FILES: [&str; 5] = [TRAJECTORY_CSV, FUNCTION_GRID_CSV, ERRORS_CSV, POSTERIOR_JSON, RUN_META_JSON];

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: Vec<String>) -> Self {
        Self { headers, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| cell(v)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.iter().map(String::from).collect::<Vec<_>>();
        let mut table = Self::new(headers);
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != table.headers.len() {
                return Err(Error::Parse {
                    line,
                    column: rec.len().min(table.headers.len()) + 1,
                    message: format!("expected {} fields, found {}", table.headers.len(), rec.len()),
                });
            }
            let row = rec
                .iter()
                .enumerate()
                .map(|(c, f)| {
                    if f.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        f.parse::<f64>().map_err(|e| Error::Parse {
                            line,
                            column: c + 1,
                            message: format!("{f:?}: {e}"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Final parameters and the statistics they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFile {
    pub params: MniwParams,
    pub stats: SuffStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Error,
}

/// Everything needed to reproduce a run, plus its summary metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub package: String,
    pub version: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn read_posterior(path: &Path) -> Result<PosteriorFile> {
    read_json(path)
}

pub fn read_meta(path: &Path) -> Result<RunMeta> {
    read_json(path)
}
