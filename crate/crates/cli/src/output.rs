//! Deterministic CSV emission.
//!
//! Every file starts with a block of `# key=value` header lines (units,
//! provenance of the run), then one comma-separated column-name row, then
//! data rows. Floats are printed with 17 significant digits so a rerun of
//! the same configuration is byte-identical and parses back to the same
//! bits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Render a float with enough digits to round-trip exactly.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV file under construction: header metadata, column names, rows.
pub struct Table {
    meta: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            meta: vec![("units".into(), "hartree atomic units".into())],
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.meta.push((key.to_string(), value.into()));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows_len(&self) -> usize {
        self.rows.len()
    }

    /// Write to `dir/name`, creating the directory if needed.
    pub fn write(&self, dir: &Path, name: &str) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        for (k, v) in &self.meta {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_through_text() {
        for &x in &[0.1, -1.0 / 3.0, 6.626e-34, 1.0 + f64::EPSILON] {
            let back: f64 = num(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn tables_carry_headers_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["a", "b"]);
        t.meta("scene", "demo");
        t.row(vec![num(1.0), num(2.0)]);
        let path = t.write(dir.path(), "demo.csv").unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# units=hartree atomic units");
        assert_eq!(lines.next().unwrap(), "# scene=demo");
        assert_eq!(lines.next().unwrap(), "a,b");
        assert!(lines.next().unwrap().starts_with("1.0000000000000000e0,"));
    }
}
