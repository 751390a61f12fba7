use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::runner::Row;

pub const CSV_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const TABLES_DIR: &str = "tables";

#[derive(Serialize)]
struct CsvRow<'a> {
    scenario: &'a str,
    check: &'a str,
    residual: String,
    tolerance: String,
    pass: bool,
    wall_time_ms: u128,
}

#[derive(Serialize)]
struct Totals {
    checks: usize,
    passed: usize,
    failed: usize,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    scenario: &'a str,
    check: &'a str,
    residual: f64,
    tolerance: f64,
    pass: bool,
    wall_time_ms: u128,
    metadata: BTreeMap<&'a str, &'a str>,
}

#[derive(Serialize)]
struct Summary<'a> {
    totals: Totals,
    row: Vec<SummaryRow<'a>>,
}

/// File-name-safe version of a scenario or check name.
fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn wall(row: &Row, timing: bool) -> u128 {
    if timing {
        row.wall_ms
    } else {
        0
    }
}

pub fn write_csv(rows: &[Row], path: &Path, timing: bool) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["scenario", "check", "residual", "tolerance", "pass", "wall_time_ms"])?;
    }
    for r in rows {
        w.serialize(CsvRow {
            scenario: &r.scenario,
            check: &r.report.check,
            residual: format!("{:e}", r.report.residual),
            tolerance: format!("{:e}", r.report.tolerance),
            pass: r.report.pass,
            wall_time_ms: wall(r, timing),
        })?;
    }
    w.flush()
}

pub fn write_summary(rows: &[Row], path: &Path, timing: bool) -> io::Result<()> {
    let passed = rows.iter().filter(|r| r.report.pass).count();
    let summary = Summary {
        totals: Totals { checks: rows.len(), passed, failed: rows.len() - passed },
        row: rows
            .iter()
            .map(|r| SummaryRow {
                scenario: &r.scenario,
                check: &r.report.check,
                residual: r.report.residual,
                tolerance: r.report.tolerance,
                pass: r.report.pass,
                wall_time_ms: wall(r, timing),
                metadata: r.report.metadata.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
            })
            .collect(),
    };
    let text = toml::to_string(&summary).map_err(io::Error::other)?;
    fs::write(path, text)
}

/// One `h,value` CSV per convergence table under `dir/<scenario>/`.
pub fn write_tables(rows: &[Row], dir: &Path) -> io::Result<usize> {
    let mut written = 0;
    for r in rows {
        for t in &r.report.tables {
            let sub = dir.join(slug(&r.scenario));
            fs::create_dir_all(&sub)?;
            let mut w = csv::Writer::from_path(sub.join(format!("{}.{}.csv", slug(&r.report.check), slug(&t.label))))?;
            w.write_record(["h", "value"])?;
            for (h, v) in &t.rows {
                w.write_record([format!("{h:e}"), format!("{v:e}")])?;
            }
            w.flush()?;
            written += 1;
        }
    }
    Ok(written)
}

/// The residual table printed for failing rows.
pub fn failure_table(rows: &[Row]) -> String {
    let mut out = String::new();
    for r in rows.iter().filter(|r| !r.report.pass) {
        out.push_str(&format!(
            "FAIL {:<28} {:<32} residual {:<12.4e} tolerance {:.1e}",
            r.scenario, r.report.check, r.report.residual, r.report.tolerance
        ));
        if let Some((_, e)) = r.report.metadata.iter().find(|(k, _)| k == "error") {
            out.push_str(&format!("  ({e})"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use bdtrace::verify::CheckReport;

    #[test]
    fn empty_run_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_csv(&[], &p, true).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "scenario,check,residual,tolerance,pass,wall_time_ms\n");
    }

    #[test]
    fn one_passing_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let row = Row { scenario: "s".into(), report: CheckReport::new("ibp", 1e-12, 1e-6), wall_ms: 3 };
        write_csv(&[row], &p, false).unwrap();
        let text = fs::read_to_string(p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "s,ibp,1e-12,1e-6,true,0");
    }

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("phi-1:ibp"), "phi-1_ibp");
    }
}
