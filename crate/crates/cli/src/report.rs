//! Run reports and their CSV / text serialisations.
//!
//! CSV is long format with the fixed header `series,index,value,err`; each
//! series occupies one contiguous block of rows. `err` holds the standard
//! error, tolerance or certified tail attached to the value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use crate::error::CliError;

pub const CSV_HEADER: &str = "series,index,value,err";

/// Shortest round-trip form; scientific outside `[1e-4, 1e15)`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Text,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Text => "txt",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "text" => Ok(Format::Text),
            other => Err(format!("unknown format `{other}` (expected csv or text)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub index: usize,
    pub value: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub rows: Vec<Row>,
}

impl Series {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, index: usize, value: f64, err: f64) {
        self.rows.push(Row { index, value, err });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictLine {
    pub name: String,
    pub verdict: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub digest: String,
    pub series: Vec<Series>,
    pub verdicts: Vec<VerdictLine>,
    pub notes: Vec<String>,
    /// Not serialised, so that output files depend only on the inputs.
    pub wall_clock: Duration,
}

impl RunReport {
    pub fn new(command: impl Into<String>, digest: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            digest: digest.into(),
            series: Vec::new(),
            verdicts: Vec::new(),
            notes: Vec::new(),
            wall_clock: Duration::ZERO,
        }
    }

    /// Appends a series, or extends an existing one of the same name.
    pub fn add(&mut self, series: Series) {
        match self.series.iter_mut().find(|s| s.name == series.name) {
            Some(existing) => existing.rows.extend(series.rows),
            None => self.series.push(series),
        }
    }

    /// Single-row series.
    pub fn scalar(&mut self, name: impl Into<String>, value: f64, err: f64) {
        let mut s = Series::new(name);
        s.push(0, value, err);
        self.add(s);
    }

    pub fn verdict(&mut self, name: impl Into<String>, verdict: impl Into<String>, passed: bool) {
        self.verdicts.push(VerdictLine {
            name: name.into(),
            verdict: verdict.into(),
            passed,
        });
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn suite_failed(&self) -> bool {
        self.verdicts.iter().any(|v| !v.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.series {
            for r in &s.rows {
                let _ = writeln!(out, "{},{},{},{}", s.name, r.index, format_number(r.value), format_number(r.err));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# command: {}", self.command);
        let _ = writeln!(out, "# inputs: {}", self.digest);
        let width = self.series.iter().map(|s| s.name.len()).max().unwrap_or(6).max(6);
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>24}  {:>24}", "series", "index", "value", "err");
        for s in &self.series {
            for r in &s.rows {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>6}  {:>24}  {:>24}",
                    s.name,
                    r.index,
                    format!("{:.15e}", r.value),
                    format!("{:.3e}", r.err)
                );
            }
        }
        for v in &self.verdicts {
            let _ = writeln!(out, "# verdict {}: {}", v.name, v.verdict);
        }
        for n in &self.notes {
            let _ = writeln!(out, "# note: {n}");
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Text => self.to_text(),
        }
    }

    /// Writes `<dir>/<command>.<ext>` and returns its path.
    pub fn write_to(&self, dir: &Path, format: Format) -> Result<PathBuf, CliError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let path = dir.join(format!("{}.{}", self.command, format.extension()));
        std::fs::write(&path, self.render(format)).map_err(io(&path))?;
        Ok(path)
    }
}

/// Reads back CSV produced by [`RunReport::to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<Series>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing header".into());
    }
    let mut out: Vec<Series> = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let [name, index, value, err] = fields[..] else {
            return Err(format!("row {}: expected 4 fields", i + 2));
        };
        let bad = |what: &str| format!("row {}: bad {what}", i + 2);
        let row = Row {
            index: index.parse().map_err(|_| bad("index"))?,
            value: value.parse().map_err(|_| bad("value"))?,
            err: err.parse().map_err(|_| bad("err"))?,
        };
        match out.last_mut() {
            Some(s) if s.name == name => s.rows.push(row),
            _ => {
                if out.iter().any(|s| s.name == name) {
                    return Err(format!("row {}: series `{name}` is not contiguous", i + 2));
                }
                out.push(Series {
                    name: name.to_string(),
                    rows: vec![row],
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let r = RunReport::new("inspect", "00");
        assert_eq!(r.to_csv(), "series,index,value,err\n");
        assert!(parse_csv(&r.to_csv()).unwrap().is_empty());
    }

    #[test]
    fn three_series_round_trip_as_blocks() {
        let mut r = RunReport::new("approx", "00");
        for name in ["a", "b", "c"] {
            let mut s = Series::new(name);
            for i in 0..4 {
                s.push(i, 0.1 * i as f64 + 1.0 / 3.0, 1e-9);
            }
            r.add(s);
        }
        // Late rows join their existing block.
        let mut extra = Series::new("a");
        extra.push(9, -2.5, 0.0);
        r.add(extra);
        let csv = r.to_csv();
        let back = parse_csv(&csv).unwrap();
        assert_eq!(back, r.series);
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].rows.len(), 5);
    }

    #[test]
    fn suite_failure_follows_verdicts() {
        let mut r = RunReport::new("fclt", "00");
        r.verdict("x", "pass", true);
        assert!(!r.suite_failed());
        r.verdict("y", "fail", false);
        assert!(r.suite_failed());
        assert!(r.to_text().contains("# verdict y: fail"));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, -0.0, 3.0, 1.0 / 3.0, 2.7755575615628914e-17, 1e-4, 9.99e-5, 1e15, -4.2e300, f64::INFINITY] {
            assert_eq!(format_number(v).parse::<f64>().unwrap().to_bits(), v.to_bits(), "{v}");
        }
        assert_eq!(format_number(2.5e-17), "2.5e-17");
        assert_eq!(format_number(12.0), "12");
    }

    #[test]
    fn format_parses() {
        assert_eq!("csv".parse::<Format>().unwrap(), Format::Csv);
        assert_eq!("text".parse::<Format>().unwrap(), Format::Text);
        assert!("json".parse::<Format>().is_err());
    }
}
