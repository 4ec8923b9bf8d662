//! Versioned CSV tables and metric records.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

/// Bumped whenever a table's columns change.
pub const CSV_VERSION: u32 = 1;

/// A CSV table whose first line names the table and its column version.
pub struct Table {
    name: &'static str,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Table {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns.len(), "row width");
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# gpeps {} v{CSV_VERSION}", self.name).unwrap();
        writeln!(s, "{}", self.columns.join(",")).unwrap();
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| escape(c)).collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }
}

fn escape(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

/// Wall times, kept apart from the result tables so those stay
/// reproducible.
#[derive(Default)]
pub struct Timings {
    entries: Vec<(String, Duration)>,
}

impl Timings {
    pub fn push(&mut self, label: &str, d: Duration) {
        self.entries.push((label.to_string(), d));
    }

    pub fn write(&self, path: &Path, run_id: &str) -> std::io::Result<()> {
        let mut t = Table::new("timing", &["run_id", "stage", "seconds"]);
        for (label, d) in &self.entries {
            t.row(vec![run_id.to_string(), label.clone(), format!("{:.6}", d.as_secs_f64())]);
        }
        t.write(path)
    }
}

#[derive(Clone, Debug)]
enum Value {
    Real(f64),
    Count(usize),
    Flag(bool),
    Skipped(String),
}

#[derive(Clone, Copy, Debug)]
enum Bound {
    Below(f64),
    Equals(usize),
    Text(&'static str),
    None,
}

/// A named scalar result with the bound it was checked against.
#[derive(Clone, Debug)]
pub struct Metric {
    pub check: &'static str,
    pub name: String,
    value: Value,
    bound: Bound,
    /// `None` when the metric was not checked.
    pub pass: Option<bool>,
}

impl Metric {
    /// Passes when `value <= tol`.
    pub fn max(check: &'static str, name: &str, value: f64, tol: f64) -> Self {
        Metric {
            check,
            name: name.to_string(),
            value: Value::Real(value),
            bound: Bound::Below(tol),
            pass: Some(value >= 0.0 && value <= tol),
        }
    }

    pub fn count(check: &'static str, name: &str, value: usize, expected: usize) -> Self {
        Metric {
            check,
            name: name.to_string(),
            value: Value::Count(value),
            bound: Bound::Equals(expected),
            pass: Some(value == expected),
        }
    }

    pub fn flag(check: &'static str, name: &str, ok: bool, expected: &'static str) -> Self {
        Metric {
            check,
            name: name.to_string(),
            value: Value::Flag(ok),
            bound: Bound::Text(expected),
            pass: Some(ok),
        }
    }

    pub fn skipped(check: &'static str, name: &str, reason: &str) -> Self {
        Metric {
            check,
            name: name.to_string(),
            value: Value::Skipped(reason.to_string()),
            bound: Bound::None,
            pass: None,
        }
    }

    pub fn value_real(&self) -> Option<f64> {
        match self.value {
            Value::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn value_text(&self) -> String {
        match &self.value {
            Value::Real(v) => format!("{v:.6e}"),
            Value::Count(n) => n.to_string(),
            Value::Flag(b) => b.to_string(),
            Value::Skipped(r) => format!("skipped: {r}"),
        }
    }

    pub fn tolerance_text(&self) -> String {
        match self.bound {
            Bound::Below(t) => format!("<={t:e}"),
            Bound::Equals(n) => format!("=={n}"),
            Bound::Text(s) => s.to_string(),
            Bound::None => String::new(),
        }
    }

    pub fn status(&self) -> &'static str {
        match self.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "skipped",
        }
    }
}
