//! CSV emission for experiment diagnostics.
//!
//! All drivers report through [`Csv`]: a header row followed by data rows,
//! written with enough digits to round-trip `f64` values bitwise, so reruns
//! of a deterministic configuration reproduce files exactly.

use crate::error::Result;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(
            cells.len(),
            self.header.len(),
            "row width must match the header"
        );
        self.rows.push(cells);
    }

    pub fn to_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, self.to_string())?;
        Ok(())
    }
}

/// Full-precision float formatting (round-trips through parsing).
pub fn fnum(v: f64) -> String {
    format!("{v:.17e}")
}
