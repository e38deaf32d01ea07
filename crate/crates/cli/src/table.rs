//! Flat CSV tables: one header row, then data rows, numbers in Rust's shortest
//! round-trip notation (no locale, `NaN` for missing values).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).with_context(|| format!("missing column '{name}'"))
    }

    /// Columns whose name starts with `prefix`, in order.
    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<usize> {
        (0..self.header.len()).filter(|&i| self.header[i].starts_with(prefix)).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut table = Table { header, rows: Vec::new() };
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != table.header.len() {
                bail!("row has {} fields, header has {}", rec.len(), table.header.len());
            }
            table.rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(table)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_csv(&text)
    }
}

/// Writes `table` to `path`, creating parent directories. An empty table gives a
/// header-only file.
pub fn emit_plotdata(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, table.to_csv()?).with_context(|| format!("writing {}", path.display()))
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().with_context(|| format!("'{s}' is not a number"))
}

pub fn parse_usize(s: &str) -> Result<usize> {
    s.parse::<usize>().with_context(|| format!("'{s}' is not a count"))
}

pub fn parse_bool(s: &str) -> Result<bool> {
    s.parse::<bool>().with_context(|| format!("'{s}' is not true/false"))
}
