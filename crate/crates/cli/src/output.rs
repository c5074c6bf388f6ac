//! File writers. Numbers use the shortest decimal form that parses back
//! to the same `f64`, so reruns produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Builds a CSV body: header row, then one row per record.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    /// No header row; for layouts whose header rows carry data.
    pub fn bare() -> Self {
        Self { text: String::new() }
    }

    pub fn comment(&mut self, line: &str) {
        let _ = writeln!(self.text, "# {line}");
    }

    pub fn row(&mut self, values: impl IntoIterator<Item = f64>) {
        let cells: Vec<String> = values.into_iter().map(num).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn labelled_row(&mut self, label: &str, values: impl IntoIterator<Item = f64>) {
        self.text.push_str(label);
        for v in values {
            self.text.push(',');
            self.text.push_str(&num(v));
        }
        self.text.push('\n');
    }

    pub fn raw_row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, &self.text)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -0.0, 2.0] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1e-7), "1e-7");
    }

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&["a", "b"]);
        c.row([1.0, 0.5]);
        c.labelled_row("x", [2.0]);
        assert_eq!(c.text, "a,b\n1.0,0.5\nx,2.0\n");
    }
}
