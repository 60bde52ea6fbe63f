//! Result bundles: data tables, plots, a copy of the scenario and a
//! `summary.json` carrying the run metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use stoch_ham::DiscretePath;

use crate::config::Format;
use crate::error::CliResult;
use crate::svg::Figure;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Shortest text that parses back to the same `f64`, in positional notation
/// for moderate magnitudes and exponent notation otherwise.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// `t, q_1..q_n, p_1..p_n`, one row per node.
    pub fn from_path(path: &DiscretePath) -> Self {
        let n = path.dim();
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|i| format!("q_{i}")));
        cols.extend((1..=n).map(|i| format!("p_{i}")));
        let mut table = Table::new(cols);
        for (k, node) in path.nodes().enumerate() {
            let mut row = vec![Cell::Float(path.grid().time(k))];
            row.extend(node.iter().map(|&v| Cell::Float(v)));
            table.push(row);
        }
        table
    }

    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::text))?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// Run metadata recorded in every bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
}

impl Metadata {
    pub fn new(command: &str, seed: u64, config_text: &str) -> Self {
        Metadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_sha256: config_hash(config_text),
        }
    }
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Collects the files of one command invocation in its output directory.
pub struct Bundle {
    dir: PathBuf,
    format: Format,
    plots: bool,
    files: Vec<String>,
}

impl Bundle {
    /// Creates the directory and stores the scenario text as `scenario.toml`.
    pub fn create(dir: &Path, format: Format, plots: bool, config_text: &str) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        let mut bundle = Bundle { dir: dir.to_path_buf(), format, plots, files: Vec::new() };
        bundle.write("scenario.toml", config_text.as_bytes())?;
        Ok(bundle)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `<name>.csv` and/or `<name>.json` according to the format.
    pub fn table(&mut self, name: &str, table: &Table) -> CliResult<()> {
        if self.format.csv() {
            let bytes = table.to_csv()?;
            self.write(&format!("{name}.csv"), &bytes)?;
        }
        if self.format.json() {
            let bytes = serde_json::to_vec(table)?;
            self.write(&format!("{name}.json"), &bytes)?;
        }
        Ok(())
    }

    /// Writes `<name>.svg` unless plots are disabled.
    pub fn plot(&mut self, name: &str, figure: &Figure) -> CliResult<()> {
        if self.plots {
            let svg = figure.render();
            self.write(&format!("{name}.svg"), svg.as_bytes())?;
        }
        Ok(())
    }

    /// Writes `summary.json`: the result fields at top level, plus
    /// `metadata` and the list of files in the bundle.
    pub fn finish(mut self, metadata: &Metadata, results: Map<String, Value>) -> CliResult<PathBuf> {
        let mut summary = results;
        summary.insert("metadata".into(), serde_json::to_value(metadata)?);
        self.files.push("summary.json".into());
        summary.insert("files".into(), json!(self.files));
        let mut text = serde_json::to_string_pretty(&Value::Object(summary))?;
        text.push('\n');
        fs::write(self.dir.join("summary.json"), text)?;
        Ok(self.dir)
    }
}
