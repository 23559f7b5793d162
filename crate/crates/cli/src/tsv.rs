//! Tab-separated result tables. Every stage writes its results through
//! these helpers so that floats are printed the same way everywhere.

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

pub const NA: &str = "NA";

/// Shortest representation that parses back to the same value.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        NA.to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), num)
}

/// Fixed-point rendering used for displayed statistics.
pub fn fixed(x: f64, digits: usize) -> String {
    if x.is_finite() {
        let s = format!("{x:.digits$}");
        // avoid "-0.000000"
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    } else {
        num(x)
    }
}

pub fn parse_opt(s: &str) -> Option<f64> {
    match s {
        NA | "" => None,
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Index of a column that must be present.
    pub fn require(&self, name: &str, path: &Path) -> Result<usize> {
        self.column(name).ok_or_else(|| CliError::Stage {
            stage: "read".into(),
            detail: format!("{}: missing column {name:?}", path.display()),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_delimited(path, b'\t')
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_delimited(path, b',')
    }

    fn write_delimited(&self, path: &Path, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_path(path)
            .map_err(|e| CliError::table(path, e))?;
        w.write_record(&self.header).map_err(|e| CliError::table(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::table(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .from_path(path)
            .map_err(|e| CliError::table(path, e))?;
        let header = rdr
            .headers()
            .map_err(|e| CliError::table(path, e))?
            .iter()
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CliError::table(path, e))?;
            rows.push(rec.iter().map(String::from).collect());
        }
        Ok(Table { header, rows })
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -3.25e-12, 1.0 / 3.0, 12345.678] {
            assert_eq!(parse_opt(&num(x)), Some(x));
        }
        assert_eq!(parse_opt(&opt(None)), None);
        assert_eq!(fixed(-0.0000001, 4), "0.0000");
        assert_eq!(fixed(1.23456, 2), "1.23");
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["x y".into(), num(0.5)]);
        t.push(vec![NA.into(), "q\"uote".into()]);
        t.write(&path).unwrap();
        assert_eq!(Table::read(&path).unwrap(), t);
    }
}
