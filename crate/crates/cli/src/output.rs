//! CSV tables with JSON metadata sidecars.
//!
//! Floats are written as `{:.14e}` (15 significant digits). A cell that does
//! not apply to its row is left empty.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub fn num(v: f64) -> String {
    format!("{v:.14e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self::with_columns(columns.iter().map(|c| c.to_string()).collect())
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    experiment: &'static str,
    file: &'a str,
    columns: &'a [String],
    rows: usize,
    generator: &'static str,
    config: &'a ExperimentConfig,
}

/// The output directory of one command run.
pub struct Output<'a> {
    dir: PathBuf,
    config: &'a ExperimentConfig,
    written: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    pub fn create(config: &'a ExperimentConfig) -> Result<Self> {
        let dir = config.output_dir.clone();
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        Ok(Self { dir, config, written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes `name` and `name.meta.json`.
    pub fn table(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let csv_err = |source| CliError::Csv { path: path.clone(), source };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(&table.columns).map_err(csv_err)?;
        for row in &table.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(CliError::io(&path))?;
        self.finish_csv(name, path, &table.columns, table.len())
    }

    /// Writes CSV text produced elsewhere; the first line is the header.
    pub fn csv_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(CliError::io(&path))?;
        let columns: Vec<String> = text.lines().next().unwrap_or_default().split(',').map(String::from).collect();
        self.finish_csv(name, path, &columns, text.lines().count().saturating_sub(1))
    }

    fn finish_csv(&mut self, name: &str, path: PathBuf, columns: &[String], rows: usize) -> Result<PathBuf> {
        let meta = Meta {
            experiment: self.config.experiment.name(),
            file: name,
            columns,
            rows,
            generator: concat!("nqsmp ", env!("CARGO_PKG_VERSION")),
            config: self.config,
        };
        self.json(&format!("{name}.meta.json"), &meta)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        let mut text = serde_json::to_string_pretty(value).map_err(nqsmp::Error::from)?;
        text.push('\n');
        fs::write(&path, text).map_err(CliError::io(&path))?;
        self.written.push(path.clone());
        Ok(path)
    }
}
