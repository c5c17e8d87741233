use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// `# key: value` lines in CSV, a `metadata` object in JSON.
pub type Metadata = BTreeMap<String, String>;

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// 17 significant digits, so values survive a round trip.
    pub fn to_csv(&self, meta: &Metadata) -> String {
        let mut s = header(meta, "#");
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self, meta: &Metadata) -> String {
        with_metadata(meta, json!({ "columns": self.columns, "rows": self.rows }))
    }

    pub fn render(&self, format: Format, meta: &Metadata) -> String {
        match format {
            Format::Csv => self.to_csv(meta),
            Format::Json => self.to_json(meta),
        }
    }
}

pub fn header(meta: &Metadata, prefix: &str) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        let _ = writeln!(s, "{prefix} {k}: {v}");
    }
    s
}

/// Pretty JSON object `{ "metadata": …, <body fields> }`.
pub fn with_metadata(meta: &Metadata, body: Value) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("metadata".into(), json!(meta));
    match body {
        Value::Object(fields) => obj.extend(fields),
        other => {
            obj.insert("data".into(), other);
        }
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(obj)).expect("JSON value serializes");
    s.push('\n');
    s
}

/// Files produced by one command, written together at the end.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, String)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, content: String) {
        self.files.push((name.into(), content));
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<String>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for (name, content) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, content).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
            written.push(path.display().to_string());
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_keeps_seventeen_digits() {
        let mut t = Table::new(vec!["a".into(), "b".into()]);
        t.push(vec![0.1, -2.5e-300]);
        let meta = Metadata::from([("version".to_string(), "x".to_string())]);
        let csv = t.to_csv(&meta);
        assert_eq!(csv, "# version: x\na,b\n1.0000000000000001e-1,-2.5000000000000000e-300\n");
        let back: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn json_carries_metadata() {
        let mut t = Table::new(vec!["a".into()]);
        t.push(vec![1.5]);
        let meta = Metadata::from([("k".to_string(), "v".to_string())]);
        let v: Value = serde_json::from_str(&t.to_json(&meta)).unwrap();
        assert_eq!(v["metadata"]["k"], "v");
        assert_eq!(v["rows"][0][0], 1.5);
    }
}
