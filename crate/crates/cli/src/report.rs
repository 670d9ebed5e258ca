//! JSON and CSV report writers.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::experiment::{Aggregate, AlignmentRow, BatchRecord, RunRecord};
use crate::CliError;

pub const SCHEMA: &str = "okl-report/1";

pub const RUN_CSV_HEADER: [&str; 16] =
    ["algo", "dataset", "sigma", "zeta", "B", "B0", "M", "U", "c", "seed", "perm", "amr", "time_s", "A_T", "t_bar", "restarts"];

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| io_err(path, e))?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, item: &T) -> Result<(), CliError> {
    let mut buf = serde_json::to_vec_pretty(item).map_err(|e| io_err(path, e))?;
    buf.push(b'\n');
    std::fs::write(path, buf).map_err(|e| io_err(path, e))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run_csv_row(r: &RunRecord) -> Vec<String> {
    let s = &r.settings;
    vec![
        s.algo.as_str().to_string(),
        s.dataset.clone(),
        s.sigma.to_string(),
        s.zeta.to_string(),
        s.budget.to_string(),
        s.b0.to_string(),
        s.window.to_string(),
        s.u.to_string(),
        s.c.to_string(),
        s.seed.to_string(),
        r.perm.to_string(),
        r.report.amr.to_string(),
        r.report.wall_time_seconds.to_string(),
        opt(r.alignment),
        opt(r.report.t_bar),
        r.report.restart_times.len().to_string(),
    ]
}

pub fn write_run_csv(path: &Path, records: &[RunRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(RUN_CSV_HEADER).map_err(|e| io_err(path, e))?;
    for r in records {
        w.write_record(run_csv_row(r)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
pub struct AggregateFile<'a> {
    pub schema: &'static str,
    pub aggregates: &'a [Aggregate],
    pub best: &'a Aggregate,
    pub alignment: Option<f64>,
}

pub fn run_stem(out: &Path, algo: &str, dataset: &str) -> PathBuf {
    out.join(format!("{algo}_{dataset}"))
}

pub fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_alignment_csv(path: &Path, rows: &[AlignmentRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["dataset", "T", "sigma", "A_T", "delta_sum", "B0", "t_bar", "zeta", "c", "seed"])
        .map_err(|e| io_err(path, e))?;
    for r in rows {
        let t_bar: Vec<String> = r.t_bar.iter().map(|t| t.map_or("inf".to_string(), |v| v.to_string())).collect();
        w.write_record([
            r.dataset.clone(),
            r.rounds.to_string(),
            r.sigma.to_string(),
            r.alignment.to_string(),
            r.delta_sum_mean.to_string(),
            r.b0.to_string(),
            t_bar.join(";"),
            r.zeta.to_string(),
            r.c.to_string(),
            r.seed.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_batch_csv(path: &Path, rows: &[BatchRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["dataset", "sigma", "zeta", "c", "seed", "r_seed", "r", "test_hinge_risk", "test_error_rate"])
        .map_err(|e| io_err(path, e))?;
    for b in rows {
        w.write_record([
            b.dataset.clone(),
            b.sigma.to_string(),
            b.zeta.to_string(),
            b.c.to_string(),
            b.seed.to_string(),
            b.report.r_seed.to_string(),
            b.report.r.to_string(),
            b.report.test_hinge_risk.to_string(),
            b.report.test_error_rate.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Prints to stdout, ignoring a closed pipe.
pub fn say(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}
