//! CSV tables and summary files.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use csg::bench::checks::Check;

/// A CSV field; non-finite and missing numbers are left empty.
pub fn field(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v}"),
        _ => String::new(),
    }
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `run.csv` becomes `run.summary.json`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.summary.json"))
}

#[derive(Serialize)]
pub struct Summary<T: Serialize> {
    pub command: &'static str,
    pub config: serde_json::Value,
    #[serde(flatten)]
    pub results: T,
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

pub fn write_summary<T: Serialize>(out: &Path, command: &'static str, config: serde_json::Value, results: T, checks: Vec<Check>) -> Result<PathBuf> {
    let all_passed = checks.iter().all(|c| c.passed);
    let summary = Summary { command, config, results, checks, all_passed };
    let path = summary_path(out);
    std::fs::write(&path, serde_json::to_string_pretty(&summary)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// One line per check on stderr.
pub fn report(checks: &[Check]) {
    for c in checks {
        eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_next_to_output() {
        assert_eq!(summary_path(Path::new("a/run.csv")), PathBuf::from("a/run.summary.json"));
        assert_eq!(summary_path(Path::new("run")), PathBuf::from("run.summary.json"));
    }

    #[test]
    fn empty_fields() {
        assert_eq!(field(None), "");
        assert_eq!(field(Some(f64::NAN)), "");
        assert_eq!(field(Some(0.5)), "0.5");
    }
}
