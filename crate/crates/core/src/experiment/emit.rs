//! Result tables and their emission as CSV files or one JSON document.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Result;

use super::config::{ExperimentConfig, OutputFormat};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v:e}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    write!(f, "\"{}\"", s.replace('"', "\"\""))
                } else {
                    f.write_str(s)
                }
            }
            Cell::Bool(b) => write!(f, "{}", *b as u8),
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
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A named table with a fixed column schema.
#[derive(Clone, Debug, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; panics if the width does not match the schema.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    /// CSV body: a comment line, the header, then the rows.
    pub fn to_csv(&self, comment: &str) -> String {
        let mut out = format!("# {comment}\n{}\n", self.columns.join(","));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// One checked property of an experiment.
#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_owned(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub tables: Vec<Table>,
    pub assertions: Vec<Assertion>,
    pub notes: Vec<String>,
}

impl ExperimentResult {
    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_owned(),
            tables: Vec::new(),
            assertions: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn assert(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion::new(name, passed, detail));
    }
}

/// `sha256("blob <len>\0" + bytes)`, git's object framing over SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn header_comment(cfg: &ExperimentConfig) -> String {
    format!(
        "config_hash={} master_seed={} experiment={}",
        cfg.hash(),
        cfg.noise.master_seed,
        cfg.experiment.name()
    )
}

/// Summary document; `tables` is either the full tables or just their file
/// names.
fn summary(result: &ExperimentResult, cfg: &ExperimentConfig, tables: Value) -> Value {
    let mut doc = json!({
        "experiment": result.experiment,
        "config": cfg,
        "config_hash": cfg.hash(),
        "seeds": { "master_seed": cfg.noise.master_seed },
        "passed": result.passed(),
        "assertions": result.assertions,
        "notes": result.notes,
        "tables": tables,
    });
    let body = serde_json::to_vec(&doc).expect("summary serializes");
    doc["content_hash"] = Value::String(content_hash(&body));
    doc["timestamp_unix"] = json!(std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0));
    doc
}

/// Renders the artifacts as `(file name, bytes)` pairs.
pub fn render(result: &ExperimentResult, cfg: &ExperimentConfig) -> Vec<(String, Vec<u8>)> {
    let comment = header_comment(cfg);
    match cfg.output.format {
        OutputFormat::Csv => {
            let mut files: Vec<(String, Vec<u8>)> = result
                .tables
                .iter()
                .map(|t| (format!("{}.csv", t.name), t.to_csv(&comment).into_bytes()))
                .collect();
            // content hash covers the table bytes through their digests
            let index: Vec<Value> = files
                .iter()
                .map(|(name, bytes)| json!({ "file": name, "hash": content_hash(bytes) }))
                .collect();
            let doc = summary(result, cfg, Value::Array(index));
            let text = serde_json::to_string_pretty(&doc).expect("summary serializes");
            files.push(("summary.json".into(), (text + "\n").into_bytes()));
            files
        }
        OutputFormat::Json => {
            let tables = serde_json::to_value(&result.tables).expect("tables serialize");
            let doc = summary(result, cfg, tables);
            let text = serde_json::to_string_pretty(&doc).expect("summary serializes");
            vec![("results.json".into(), (text + "\n").into_bytes())]
        }
    }
}

/// Writes the artifacts into the configured directory. Every file is first
/// written under a temporary name; nothing is left behind on failure.
pub fn emit_results(result: &ExperimentResult, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    write_atomically(&cfg.output.directory, &render(result, cfg))
}

fn write_atomically(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        let dest = dir.join(name);
        let written = fs::File::create(&tmp).and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        });
        if let Err(e) = written {
            let _ = fs::remove_file(&tmp);
            cleanup(&staged);
            return Err(e.into());
        }
        staged.push((tmp, dest));
    }
    let mut done = Vec::new();
    for (i, (tmp, dest)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, dest) {
            cleanup(&staged[i..]);
            for d in &done {
                let _ = fs::remove_file(d);
            }
            return Err(e.into());
        }
        done.push(dest.clone());
    }
    Ok(done)
}
