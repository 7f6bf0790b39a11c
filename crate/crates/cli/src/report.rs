//! CSV data files and console summaries.

use std::io::Write;
use std::path::Path;

use formation_core::experiment::{MethodReport, Summary, TrialRecord};
use serde::Serialize;

use crate::error::CliError;

pub const SUMMARY_HEADER: [&str; 7] = ["method", "trial", "V100", "Vinf", "AUC", "T1pct", "diverged"];

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Metric fields of one trial; empty for a diverged trial.
pub fn summary_fields(record: &TrialRecord) -> Vec<String> {
    let mut row = vec![record.method.to_string(), record.trial.to_string()];
    match &record.metrics {
        Some(m) => {
            row.push(fmt_f64(m.v100));
            row.push(fmt_f64(m.vinf));
            row.push(fmt_f64(m.auc));
            row.push(m.t1pct.map(|t| t.to_string()).unwrap_or_default());
        }
        None => row.extend(std::iter::repeat_n(String::new(), 4)),
    }
    row.push(record.diverged().to_string());
    row
}

pub fn write_summary(path: &Path, reports: &[MethodReport]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in reports {
        for rec in &r.records {
            w.write_record(summary_fields(rec)).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per method, trial and step.
pub fn write_trajectory(path: &Path, reports: &[MethodReport], agents: usize, dim: usize) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let full = reports
        .iter()
        .flat_map(|r| &r.records)
        .any(|rec| rec.states.is_some());
    let mut header: Vec<String> = ["method", "trial", "k", "V"].iter().map(|s| s.to_string()).collect();
    if full {
        for i in 0..agents {
            for m in 0..dim {
                header.push(format!("x{i}_{m}"));
            }
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in reports {
        for rec in &r.records {
            for (k, v) in rec.v.iter().enumerate() {
                let mut row = vec![r.method.to_string(), rec.trial.to_string(), k.to_string(), fmt_f64(*v)];
                if let Some(states) = &rec.states {
                    row.extend(states[k].iter().map(|x| fmt_f64(*x)));
                }
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryJson {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
}

impl From<&Summary> for SummaryJson {
    fn from(s: &Summary) -> Self {
        Self {
            count: s.count,
            mean: s.mean,
            median: s.median,
            min: s.min,
            max: s.max,
            q1: s.q1,
            q3: s.q3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodJson {
    pub method: String,
    pub trials: usize,
    pub diverged: usize,
    pub settled: usize,
    pub v100: Option<SummaryJson>,
    pub vinf: Option<SummaryJson>,
    pub auc: Option<SummaryJson>,
    pub t1pct: Option<SummaryJson>,
}

impl From<&MethodReport> for MethodJson {
    fn from(r: &MethodReport) -> Self {
        Self {
            method: r.method.to_string(),
            trials: r.records.len(),
            diverged: r.diverged,
            settled: r.settled,
            v100: r.v100.as_ref().map(Into::into),
            vinf: r.vinf.as_ref().map(Into::into),
            auc: r.auc.as_ref().map(Into::into),
            t1pct: r.t1pct.as_ref().map(Into::into),
        }
    }
}

fn cell(s: Option<&Summary>, pick: fn(&Summary) -> f64) -> String {
    s.map(|s| format!("{:.6e}", pick(s))).unwrap_or_else(|| "-".into())
}

/// Mean and median of every metric, one line per method.
pub fn print_table(out: &mut impl Write, reports: &[MethodReport]) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<8} {:>6} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>9} {:>9}",
        "method", "trials", "V100 mean", "V100 median", "Vinf mean", "Vinf median", "AUC mean", "AUC median", "T1% mean", "diverged"
    )?;
    for r in reports {
        let t1 = r
            .t1pct
            .as_ref()
            .map(|s| format!("{:.2}", s.mean))
            .unwrap_or_else(|| "never".into());
        writeln!(
            out,
            "{:<8} {:>6} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>9} {:>9}",
            r.method.name(),
            r.records.len(),
            cell(r.v100.as_ref(), |s| s.mean),
            cell(r.v100.as_ref(), |s| s.median),
            cell(r.vinf.as_ref(), |s| s.mean),
            cell(r.vinf.as_ref(), |s| s.median),
            cell(r.auc.as_ref(), |s| s.mean),
            cell(r.auc.as_ref(), |s| s.median),
            t1,
            r.diverged
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1.44, 1.761e-29, 6.02e23, 0.0, 8.870507] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.1), "0.1");
    }
}
