//! CSV outputs. Every file starts with a `fingerprint` column.

use std::path::Path;

use cfo_core::metrics::EvalReport;
use cfo_core::trainer::HistoryRow;

use crate::error::{BenchError, Result};
use crate::experiments::{ConvergenceRow, NfeRow, ReverseRow};

pub const HISTORY_COLUMNS: [&str; 4] = ["fingerprint", "step", "loss", "eval_error"];
pub const EVAL_COLUMNS: [&str; 5] = ["fingerprint", "trajectory", "rel_l2", "final_time_rel_l2", "nfe"];
pub const EVAL_SUMMARY_COLUMNS: [&str; 8] = [
    "fingerprint",
    "model",
    "mean",
    "sd",
    "mean_sd",
    "final_time_mean",
    "nfe",
    "n_diverged",
];
pub const CONVERGENCE_COLUMNS: [&str; 7] = ["fingerprint", "spline", "factor", "dt", "n_segments", "error", "order"];
pub const NFE_COLUMNS: [&str; 7] = ["fingerprint", "method", "budget_pct", "steps", "nfe", "final_error", "n_diverged"];
pub const REVERSE_COLUMNS: [&str; 5] = ["fingerprint", "noise", "target_time", "horizon", "error"];

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:e}")
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    let io = |e: csv::Error| BenchError::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn write_history(path: &Path, fp: &str, history: &[HistoryRow]) -> Result<()> {
    write_rows(
        path,
        &HISTORY_COLUMNS,
        history.iter().map(|h| {
            vec![
                fp.to_string(),
                h.step.to_string(),
                num(h.loss),
                h.eval_error.map(num).unwrap_or_default(),
            ]
        }),
    )
}

pub fn write_eval(path: &Path, report: &EvalReport) -> Result<()> {
    write_rows(
        path,
        &EVAL_COLUMNS,
        report.per_trajectory.iter().zip(&report.final_time).enumerate().map(|(k, (e, f))| {
            vec![report.fingerprint.clone(), k.to_string(), num(*e), num(*f), report.nfe.to_string()]
        }),
    )
}

pub fn write_eval_summary(path: &Path, model: &str, report: &EvalReport) -> Result<()> {
    let diverged = report.per_trajectory.iter().filter(|e| e.is_infinite()).count();
    write_rows(
        path,
        &EVAL_SUMMARY_COLUMNS,
        [vec![
            report.fingerprint.clone(),
            model.to_string(),
            num(report.mean),
            num(report.sd),
            report.mean_sd_string(),
            num(report.final_time_mean),
            report.nfe.to_string(),
            diverged.to_string(),
        ]],
    )
}

pub fn write_convergence(path: &Path, fp: &str, rows: &[ConvergenceRow]) -> Result<()> {
    write_rows(
        path,
        &CONVERGENCE_COLUMNS,
        rows.iter().map(|r| {
            vec![
                fp.to_string(),
                r.spline.to_string(),
                r.factor.to_string(),
                num(r.dt),
                r.n_segments.to_string(),
                num(r.error),
                r.order.map(num).unwrap_or_default(),
            ]
        }),
    )
}

pub fn write_nfe(path: &Path, fp: &str, rows: &[NfeRow]) -> Result<()> {
    write_rows(
        path,
        &NFE_COLUMNS,
        rows.iter().map(|r| {
            vec![
                fp.to_string(),
                r.method.to_string(),
                r.budget_pct.to_string(),
                r.steps.to_string(),
                r.nfe.to_string(),
                num(r.final_error),
                r.n_diverged.to_string(),
            ]
        }),
    )
}

pub fn write_reverse(path: &Path, fp: &str, rows: &[ReverseRow]) -> Result<()> {
    write_rows(
        path,
        &REVERSE_COLUMNS,
        rows.iter().map(|r| vec![fp.to_string(), num(r.noise), num(r.target_time), num(r.horizon), num(r.error)]),
    )
}
