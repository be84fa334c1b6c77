//! CSV output. Every file starts with a schema comment line.

use std::fs;
use std::io::Write;
use std::path::Path;

use rds_lab_core::noise::fmt_f64;
use rds_lab_core::EnsembleStat;

pub const SCHEMA_LINE: &str = "# schema=rds-lab.v1";
pub const SUMMARY_HEADER: &str = "scenario,param,value,estimate,stderr,ci_low,ci_high,n,verdict";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub param: String,
    pub value: String,
    pub estimate: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub verdict: String,
}

impl SummaryRow {
    pub fn from_stat(param: impl Into<String>, value: impl Into<String>, stat: &EnsembleStat, verdict: impl Into<String>) -> Self {
        Self {
            param: param.into(),
            value: value.into(),
            estimate: stat.mean,
            stderr: stat.stderr,
            ci_low: stat.ci_low,
            ci_high: stat.ci_high,
            n: stat.n,
            verdict: verdict.into(),
        }
    }

    /// A deterministic quantity with no sampling error.
    pub fn exact(param: impl Into<String>, value: impl Into<String>, x: f64, verdict: impl Into<String>) -> Self {
        Self {
            param: param.into(),
            value: value.into(),
            estimate: x,
            stderr: 0.0,
            ci_low: x,
            ci_high: x,
            n: 0,
            verdict: verdict.into(),
        }
    }
}

/// One per-diagnostic CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: String,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &str) -> Self {
        Self { file: file.to_string(), header: header.to_string(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// CSV cell for a value column: plain decimal, no quoting needed.
pub fn cell(x: f64) -> String {
    fmt_f64(x)
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_summary(path: &Path, scenario: &str, rows: &[SummaryRow]) -> std::io::Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{SCHEMA_LINE}")?;
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            escape(scenario),
            escape(&r.param),
            escape(&r.value),
            cell(r.estimate),
            cell(r.stderr),
            cell(r.ci_low),
            cell(r.ci_high),
            r.n,
            escape(&r.verdict)
        )?;
    }
    fs::write(path, out)
}

pub fn write_table(dir: &Path, table: &Table) -> std::io::Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{SCHEMA_LINE}")?;
    writeln!(out, "{}", table.header)?;
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|c| escape(c)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    fs::write(dir.join(&table.file), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_has_schema_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        let stat = EnsembleStat::proportion("p", 3, 4);
        write_summary(&path, "demo", &[SummaryRow::from_stat("gamma", "0.5", &stat, "a,b")]).unwrap();
        let text = fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SCHEMA_LINE);
        assert_eq!(lines[1], SUMMARY_HEADER);
        assert!(lines[2].starts_with("demo,gamma,0.5,7.5"));
        assert!(lines[2].ends_with(",4,\"a,b\""));
    }
}
