//! CSV and JSON file helpers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// A CSV table read entirely into memory.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    path: PathBuf,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let file = fs::File::open(path).map_err(|e| CliError::read(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            rows.push(record?.iter().map(str::to_string).collect());
        }
        Ok(Table {
            headers,
            rows,
            path: path.to_path_buf(),
        })
    }

    /// True for a file without a header line.
    pub fn is_blank(&self) -> bool {
        self.headers.iter().all(|h| h.is_empty()) && self.rows.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn require(&self, name: &str) -> CliResult<usize> {
        self.position(name)
            .ok_or_else(|| CliError::input(format!("{}: missing column `{name}`", self.path.display())))
    }

    pub fn strings(&self, col: usize) -> Vec<String> {
        self.rows.iter().map(|r| r[col].clone()).collect()
    }

    pub fn numbers(&self, col: usize) -> CliResult<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let v: f64 = r[col].parse().map_err(|_| {
                    CliError::input(format!(
                        "{}: row {}, column `{}`: `{}` is not a number",
                        self.path.display(),
                        i + 1,
                        self.headers[col],
                        r[col]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(CliError::input(format!(
                        "{}: row {}: non-finite value",
                        self.path.display(),
                        i + 1
                    )));
                }
                Ok(v)
            })
            .collect()
    }
}

/// Reads the `y` column of a data file.
pub fn read_observations(path: &Path) -> CliResult<Vec<f64>> {
    let table = Table::read(path)?;
    if table.is_blank() {
        return Err(msm_core::Error::NoObservations.into());
    }
    let y = table.numbers(table.require("y")?)?;
    if y.is_empty() {
        return Err(msm_core::Error::NoObservations.into());
    }
    Ok(y)
}

/// Reads `y` and `group` columns; group labels are kept as text.
pub fn read_grouped(path: &Path) -> CliResult<(Vec<f64>, Vec<String>)> {
    let table = Table::read(path)?;
    if table.is_blank() {
        return Err(msm_core::Error::NoObservations.into());
    }
    let y = table.numbers(table.require("y")?)?;
    let labels = table.strings(table.require("group")?);
    if y.is_empty() {
        return Err(msm_core::Error::NoObservations.into());
    }
    Ok((y, labels))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::write(path, e))
}

/// Writes a header and rows of numbers in shortest round-trip form.
pub fn write_numeric_csv(path: &Path, headers: &[&str], columns: &[&[f64]]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| to_write(path, e))?;
    w.write_record(headers).map_err(|e| to_write(path, e))?;
    let n = columns.first().map_or(0, |c| c.len());
    for i in 0..n {
        w.write_record(columns.iter().map(|c| c[i].to_string()))
            .map_err(|e| to_write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| to_write(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| to_write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

fn to_write(path: &Path, e: csv::Error) -> CliError {
    CliError::write(path, std::io::Error::other(e.to_string()))
}
