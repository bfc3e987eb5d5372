//! CSV tables and JSON summaries.
//!
//! Every CSV starts with a `#` line carrying the config hash and seed,
//! then a header row. Floats use Rust's shortest round-trip formatting so
//! files can be read back bit-exactly.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self, hash: &str, seed: u64) -> String {
        let mut out = format!("# config_hash={hash} seed={seed}\n");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Column `name` parsed as floats.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        self.rows.iter().map(|r| r[j].parse().ok()).collect()
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Rows of `t, x_1..x_d` for a series of states.
pub fn series_table(times: &[f64], states: &Array2<f64>, prefix: &str) -> Table {
    let mut columns = vec!["t".to_string()];
    columns.extend((1..=states.ncols()).map(|k| format!("{prefix}_{k}")));
    let mut table = Table::new(columns);
    for (t, row) in times.iter().zip(states.rows()) {
        let mut r = vec![num(*t)];
        r.extend(row.iter().map(|v| num(*v)));
        table.push(r);
    }
    table
}

/// Reads the numeric body of a CSV written by [`Table::to_csv`].
pub fn read_matrix(text: &str) -> Result<Array2<f64>, CliError> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| CliError::Io("empty CSV".into()))?;
    let width = header.split(',').count();
    let mut values = Vec::new();
    let mut rows = 0;
    for line in lines {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| CliError::Io(format!("bad CSV value {v:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        if row.len() != width {
            return Err(CliError::Io(format!("CSV row has {} fields, header has {width}", row.len())));
        }
        values.extend(row);
        rows += 1;
    }
    Array2::from_shape_vec((rows, width), values).map_err(|e| CliError::Io(e.to_string()))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_text(dir, name, &text)
}
