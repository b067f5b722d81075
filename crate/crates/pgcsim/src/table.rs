//! Result tables and their CSV form: a `#` comment line with the
//! generation time, then a header and one line per row. Floats use the
//! shortest representation that reads back exactly, always with a `.` or
//! an exponent; NaN is `nan`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{RunError, RunResult};

/// Where a number comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Analytic,
    Mc,
    Lattice,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Analytic => "analytic",
            Source::Mc => "mc",
            Source::Lattice => "lattice",
        }
    }
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        let mut s = String::new();
        write!(s, "{x:?}").expect("writing to a string");
        s
    }
}

/// Settings that reproduce a row.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub n_paths: usize,
    pub dt: f64,
    pub t_max: f64,
    pub convention: &'static str,
    pub extrema: &'static str,
}

pub const GIT_DESCRIBE: &str = env!("PGCSIM_GIT_DESCRIBE");

/// One flat record; columns keep insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultRow {
    cells: Vec<(String, String)>,
}

impl ResultRow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(mut self, key: &str, value: impl Into<String>) -> Self {
        self.cells.push((key.to_string(), value.into()));
        self
    }

    pub fn int(self, key: &str, value: impl Into<u64>) -> Self {
        let v = value.into();
        self.text(key, v.to_string())
    }

    pub fn count(self, key: &str, value: usize) -> Self {
        self.text(key, value.to_string())
    }

    /// Parameter column: an input, so it carries no method.
    pub fn param(self, key: &str, value: f64) -> Self {
        self.text(key, fmt_f64(value))
    }

    /// Result column with its `_method` sibling.
    pub fn num(self, key: &str, value: f64, source: Source) -> Self {
        let method = format!("{key}_method");
        self.text(key, fmt_f64(value)).text(&method, source.name())
    }

    pub fn flag(self, key: &str, value: bool) -> Self {
        self.text(key, if value { "1" } else { "0" })
    }

    pub fn provenance(self, p: &Provenance) -> Self {
        self.int("seed", p.seed)
            .count("n_paths", p.n_paths)
            .param("dt", p.dt)
            .param("t_max", p.t_max)
            .text("convention", p.convention)
            .text("extrema", p.extrema)
            .text("git_describe", GIT_DESCRIBE)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.cells.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.cells.iter().map(|(k, _)| k.as_str())
    }
}

/// Rows sharing one column layout, written to `name`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_string(), columns: Vec::new(), rows: Vec::new() }
    }

    /// Appends a row; its columns must match the first row's.
    pub fn push(&mut self, row: ResultRow) {
        let cols: Vec<String> = row.columns().map(String::from).collect();
        if self.rows.is_empty() && self.columns.is_empty() {
            self.columns = cols;
        } else {
            assert_eq!(cols, self.columns, "row layout differs within table {}", self.name);
        }
        self.rows.push(row.cells.into_iter().map(|(_, v)| v).collect());
    }

    pub fn column(&self, key: &str) -> Option<Vec<&str>> {
        let i = self.columns.iter().position(|c| c == key)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn to_csv(&self, stamp: &str) -> RunResult<Vec<u8>> {
        let mut buf = Vec::new();
        writeln!(buf, "# {stamp}")?;
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
            w.write_record(&self.columns)?;
            for r in &self.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        Ok(buf)
    }

    pub fn write(&self, dir: &Path, stamp: &str) -> RunResult<()> {
        std::fs::write(dir.join(&self.name), self.to_csv(stamp)?)?;
        Ok(())
    }

    /// Reads a table written by [`Table::write`]; `#` lines are skipped.
    pub fn read(path: &Path) -> RunResult<Self> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        let bad = |e: csv::Error| RunError::Config(format!("{}: {e}", path.display()));
        let columns: Vec<String> = r.headers().map_err(bad)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(bad)?.iter().map(String::from).collect());
        }
        Ok(Self { name, columns, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 2.0 / 3.0, 1e-300, 6.02e23, -0.0, 5.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(2.0), "2.0");
        assert_eq!(fmt_f64(1e-9), "1e-9");
        assert_eq!(fmt_f64(2.5e20), "2.5e20");
    }

    #[test]
    fn method_siblings_and_layout() {
        let mut t = Table::new("t.csv");
        t.push(ResultRow::new().count("n", 2).num("ratio", 2.0 / 3.0, Source::Analytic));
        t.push(ResultRow::new().count("n", 4).num("ratio", 0.4, Source::Mc));
        assert_eq!(t.columns, ["n", "ratio", "ratio_method"]);
        assert_eq!(t.column("ratio_method").unwrap(), ["analytic", "mc"]);
        let csv = String::from_utf8(t.to_csv("stamp").unwrap()).unwrap();
        assert_eq!(csv, "# stamp\nn,ratio,ratio_method\n2,0.6666666666666666,analytic\n4,0.4,mc\n");
    }

    #[test]
    #[should_panic(expected = "row layout differs")]
    fn mixed_layouts_panic() {
        let mut t = Table::new("t.csv");
        t.push(ResultRow::new().count("n", 2));
        t.push(ResultRow::new().count("m", 2));
    }

    #[test]
    fn read_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("x.csv");
        t.push(ResultRow::new().param("a", f64::NAN).text("s", "p,q"));
        t.write(dir.path(), "now").unwrap();
        let back = Table::read(&dir.path().join("x.csv")).unwrap();
        assert_eq!(back, t);
    }
}
