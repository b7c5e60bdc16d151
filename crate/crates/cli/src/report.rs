//! CSV rows and the JSON sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::experiment::Report;

pub const CSV_HEADER: &str = "label,steps,flavor,low,se_low,up,se_up,ci_lo,ci_hi";
pub const FIGURE_HEADER: &str = "inner,plain_up,cv_up,low";

pub fn rows_csv(report: &Report) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.label,
            r.steps,
            r.flavor.name(),
            r.low,
            r.se_low,
            r.up,
            r.se_up,
            r.ci_lo,
            r.ci_hi
        );
    }
    s
}

pub fn figure_csv(report: &Report) -> Option<String> {
    let points = report.figure.as_ref()?;
    let mut s = String::from(FIGURE_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", p.inner, p.plain_up, p.cv_up, p.low);
    }
    Some(s)
}

pub fn sidecar_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

/// Writes `<stem>.csv`, `<stem>.json` and, for sweeps, `<stem>.figure.csv`
/// under `dir`. Returns the written paths.
pub fn write_report(dir: &Path, stem: &str, report: &Report) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let mut put = |name: String, body: String| -> Result<(), CliError> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        out.push(path);
        Ok(())
    };
    put(format!("{stem}.csv"), rows_csv(report))?;
    put(format!("{stem}.json"), sidecar_json(report))?;
    if let Some(fig) = figure_csv(report) {
        put(format!("{stem}.figure.csv"), fig)?;
    }
    Ok(out)
}
