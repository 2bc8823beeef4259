//! CSV and JSON artifact writers.
//!
//! CSV files start with `#`-prefixed metadata lines, then one header row in
//! which every numeric column carries its unit in brackets. Floats are
//! written with shortest round-trip formatting, so identical runs produce
//! byte-identical files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Formats one float with shortest round-trip precision.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// A CSV table under construction.
pub struct Table {
    meta: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, line: impl Into<String>) {
        self.meta.push(line.into());
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.header.len(), "row width matches header");
        self.rows.push(cells);
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::new();
        for m in &self.meta {
            out.push_str("# ");
            out.push_str(m);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        let mut f = fs::File::create(path)?;
        f.write_all(out.as_bytes())
    }
}

/// Resolves the output directory and makes sure it exists.
pub fn prepare_directory(dir: &Path) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

/// Writes the report document as pretty JSON.
pub fn write_report(path: &Path, report: &serde_json::Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(report).expect("serializable report");
    text.push('\n');
    fs::write(path, text)
}
