//! Artifact writing: CSV tables, the JSON report and the manifest. Every file
//! is written to a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// A plot-ready table; cells are already formatted.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Shortest round-trip decimal form; stable across runs and platforms.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn flag(b: bool) -> String {
    b.to_string()
}

/// Column names `{prefix}0, {prefix}1, …`.
pub fn vec_header(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("{prefix}{k}")).collect()
}

pub fn vec_cells(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| num(*x)).collect()
}

fn json_number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// `{value, se, n}` for a Monte-Carlo estimate.
pub fn estimate(e: &feller_core::simulator::Estimate) -> Value {
    json!({ "value": json_number(e.value), "se": json_number(e.se), "n": e.n })
}

pub fn exact(v: f64) -> Value {
    json!({ "value": json_number(v), "tag": "exact" })
}

pub fn bound(v: f64) -> Value {
    json!({ "value": json_number(v), "tag": "bound" })
}

pub fn exact_vec(v: &[f64]) -> Value {
    json!({ "value": v.iter().map(|x| json_number(*x)).collect::<Vec<_>>(), "tag": "exact" })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Files written so far, with their digests.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub dir: PathBuf,
    entries: Vec<(String, String, usize)>,
}

impl Artifacts {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir, entries: Vec::new() }
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(file);
        write_atomic(&path, bytes)?;
        self.entries.retain(|(f, _, _)| f != file);
        self.entries.push((file.to_string(), sha256_hex(bytes), bytes.len()));
        Ok(path)
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.entries.iter().map(|(f, _, _)| self.dir.join(f)).collect()
    }

    pub fn manifest_entries(&self) -> Value {
        let mut e = self.entries.clone();
        e.sort();
        Value::Array(
            e.into_iter()
                .map(|(file, sha, bytes)| {
                    let mut m = Map::new();
                    m.insert("file".into(), json!(file));
                    m.insert("sha256".into(), json!(sha));
                    m.insert("bytes".into(), json!(bytes));
                    Value::Object(m)
                })
                .collect(),
        )
    }
}
