//! Machine-readable output: CSV tables and JSON documents, each prefixed by
//! a metadata header (tool version, seed, config hash) so every file is
//! self-describing and byte-reproducible for a fixed seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const TOOL: &str = "bandopt";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Metadata attached to every output file.
#[derive(Clone, Debug)]
pub struct Meta {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub extra: Vec<(String, String)>,
}

impl Meta {
    pub fn new(command: &str, seed: u64, config_hash: String) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config_hash,
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    fn json(&self) -> Value {
        let mut extra = serde_json::Map::new();
        for (k, v) in &self.extra {
            extra.insert(k.clone(), Value::String(v.clone()));
        }
        json!({
            "tool": TOOL,
            "version": VERSION,
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "extra": Value::Object(extra),
        })
    }
}

/// SHA-256 of a configuration file, hex encoded.
pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// SHA-256 over several files in the given order.
pub fn hash_files(paths: &[PathBuf]) -> Result<String> {
    let mut hasher = Sha256::new();
    for p in paths {
        let bytes = fs::read(p)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
        hasher.update(&bytes);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Shortest decimal representation that parses back to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// A tabular report: written as CSV (metadata in `#` comment lines) or as a
/// JSON document, depending on the requested format.
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Leading text columns (e.g. scenario labels), one entry per row.
    pub labels: Option<(String, Vec<String>)>,
}

impl Table {
    pub fn numeric(name: &'static str, columns: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Self {
            name,
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows,
            labels: None,
        }
    }

    pub fn labeled(
        name: &'static str,
        label_column: &str,
        labels: Vec<String>,
        columns: &[&str],
        rows: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            name,
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows,
            labels: Some((label_column.to_string(), labels)),
        }
    }

    pub fn write(&self, out_dir: &Path, format: Format, meta: &Meta) -> Result<PathBuf> {
        fs::create_dir_all(out_dir)
            .map_err(|e| CliError::numeric(format!("cannot create {}: {e}", out_dir.display())))?;
        match format {
            Format::Csv => self.write_csv(out_dir, meta),
            Format::Json => self.write_json(out_dir, meta),
        }
    }

    fn write_csv(&self, out_dir: &Path, meta: &Meta) -> Result<PathBuf> {
        let path = out_dir.join(format!("{}.csv", self.name));
        let mut buf = Vec::new();
        let w = &mut buf;
        let io = |e: std::io::Error| CliError::numeric(format!("write {}: {e}", path.display()));
        writeln!(w, "# {TOOL} {VERSION}").map_err(io)?;
        writeln!(w, "# command: {}", meta.command).map_err(io)?;
        writeln!(w, "# seed: {}", meta.seed).map_err(io)?;
        writeln!(w, "# config_hash: {}", meta.config_hash).map_err(io)?;
        for (k, v) in &meta.extra {
            writeln!(w, "# {k}: {v}").map_err(io)?;
        }
        let mut header = Vec::new();
        if let Some((label, _)) = &self.labels {
            header.push(label.clone());
        }
        header.extend(self.columns.iter().cloned());
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut cells = Vec::with_capacity(header.len());
            if let Some((_, labels)) = &self.labels {
                cells.push(labels[i].clone());
            }
            cells.extend(row.iter().map(|&x| fmt_f64(x)));
            writeln!(w, "{}", cells.join(",")).map_err(io)?;
        }
        fs::write(&path, buf).map_err(io)?;
        Ok(path)
    }

    fn write_json(&self, out_dir: &Path, meta: &Meta) -> Result<PathBuf> {
        let path = out_dir.join(format!("{}.json", self.name));
        let rows: Vec<Value> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut cells: Vec<Value> = Vec::new();
                if let Some((_, labels)) = &self.labels {
                    cells.push(Value::String(labels[i].clone()));
                }
                cells.extend(row.iter().map(|&x| json!(x)));
                Value::Array(cells)
            })
            .collect();
        let mut columns: Vec<String> = Vec::new();
        if let Some((label, _)) = &self.labels {
            columns.push(label.clone());
        }
        columns.extend(self.columns.iter().cloned());
        let doc = json!({
            "meta": meta.json(),
            "columns": columns,
            "rows": rows,
        });
        write_json_value(&path, &doc)?;
        Ok(path)
    }
}

/// Write a JSON document (matrices, diagnostics) with the metadata embedded.
pub fn write_json_report(
    out_dir: &Path,
    name: &str,
    meta: &Meta,
    body: Value,
) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::numeric(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(format!("{name}.json"));
    let doc = json!({
        "meta": meta.json(),
        "report": body,
    });
    write_json_value(&path, &doc)?;
    Ok(path)
}

fn write_json_value(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::numeric(format!("serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n")
        .map_err(|e| CliError::numeric(format!("write {}: {e}", path.display())))
}

/// A matrix as a JSON object with explicit shape (row-major data).
pub fn matrix_json(m: &nalgebra::DMatrix<f64>) -> Value {
    let rows: Vec<Value> = (0..m.nrows())
        .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
        .collect();
    json!({"rows": m.nrows(), "cols": m.ncols(), "data": rows})
}
