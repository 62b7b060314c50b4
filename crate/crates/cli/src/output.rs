//! CSV/JSON artifacts and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

#[derive(Clone, Debug)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i32> for Cell {
    fn from(x: i32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            // 17 significant digits round-trip every double
            Cell::Float(x) => write!(out, "{x:.16e}"),
            Cell::Int(i) => write!(out, "{i}"),
            Cell::Text(s) => write!(out, "{s}"),
        }
        .unwrap();
    }
}

pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            s.push_str("# ");
            s.push_str(c);
            s.push('\n');
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                cell.render(&mut s);
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub format: &'static str,
    pub rows: Option<usize>,
    pub columns: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub recipe: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub wall_time_s: f64,
    /// peak resident set size, where the platform reports it
    pub peak_rss_bytes: Option<u64>,
    pub outputs: Vec<OutputFile>,
}

/// Collects artifacts in one output directory.
pub struct Writer {
    dir: PathBuf,
    comments: Vec<String>,
    pub files: Vec<OutputFile>,
    /// failure reported after the artifacts and manifest are written
    pub deferred: Option<CliError>,
}

impl Writer {
    pub fn new(dir: &Path, config_hash: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output dir {}: {e}", dir.display())))?;
        let comments = vec![format!("fracsync {}", env!("CARGO_PKG_VERSION")), format!("config_hash {config_hash}")];
        Ok(Self { dir: dir.to_path_buf(), comments, files: Vec::new(), deferred: None })
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), table.render(&self.comments))?;
        self.files.push(OutputFile {
            path: name.to_string(),
            format: "csv",
            rows: Some(table.rows.len()),
            columns: Some(table.columns.clone()),
        });
        Ok(())
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(self.dir.join(name), text + "\n")?;
        self.files.push(OutputFile { path: name.to_string(), format: "json", rows: None, columns: None });
        Ok(())
    }

    pub fn defer(&mut self, e: CliError) {
        self.deferred.get_or_insert(e);
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest, CliError> {
        manifest.outputs = self.files;
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(self.dir.join("manifest.json"), text + "\n")?;
        match self.deferred {
            Some(e) => Err(e),
            None => Ok(manifest),
        }
    }
}

/// Peak resident set size from `/proc/self/status`.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
