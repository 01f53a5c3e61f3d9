//! Result rows and their on-disk forms: CSV, JSON, and the run manifest.
//!
//! Rows are ordered by grid index at construction time, every float is
//! written with 17 significant digits, and nothing time-dependent enters
//! results.csv or results.json, so a fixed (config, seed, workers) triple
//! reproduces both files byte for byte. The manifest echoes the
//! configuration for exact re-runs and is the one place wall-clock time is
//! recorded.

use crate::asymptotics::{ComparisonReport, Verdict};
use crate::harness::config::ExperimentConfig;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// One measurement row. The column set is the same for every experiment
/// kind; fields that do not apply stay empty in CSV and null in JSON.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    /// Experiment or criterion the row belongs to, e.g. "h-scan".
    pub experiment: String,
    /// Deterministic index within the experiment, in grid order.
    pub row: usize,
    /// What the row checks, e.g. "r1-mass" or "scaled-moment".
    pub check: String,
    pub n: usize,
    pub a: Option<f64>,
    pub kappa: Option<f64>,
    pub m: Option<usize>,
    pub measured: f64,
    pub std_error: Option<f64>,
    pub formula: f64,
    /// |measured - formula|, evaluated in whatever form keeps precision;
    /// for deviation-form checks this is sharper than subtracting the two
    /// rounded columns.
    pub residual: f64,
    pub budget: f64,
    pub slope: Option<f64>,
    pub verdict: String,
}

pub fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Indeterminate => "indeterminate",
    }
}

/// Row built from a comparison report, inheriting its evaluation point.
pub fn row_from_comparison(
    experiment: &str,
    row: usize,
    check: &str,
    report: &ComparisonReport,
) -> ResultRow {
    ResultRow {
        experiment: experiment.to_string(),
        row,
        check: check.to_string(),
        n: report.point.n(),
        a: Some(report.point.a()),
        kappa: Some(report.point.kappa()),
        m: None,
        measured: report.measured,
        std_error: report.std_error,
        formula: report.formula,
        residual: report.residual,
        budget: report.budget,
        slope: report.slope_diag,
        verdict: verdict_label(report.verdict).to_string(),
    }
}

pub const CSV_HEADER: &str =
    "experiment,row,check,n,a,kappa,m,measured,stderr,formula,residual,budget,slope,verdict";

fn push_float(out: &mut String, x: f64) {
    out.push_str(&format!("{x:.16e}"));
}

fn push_opt_float(out: &mut String, x: Option<f64>) {
    if let Some(v) = x {
        push_float(out, v);
    }
}

/// CSV serialization of the rows, header first, \n line endings.
pub fn csv_bytes(rows: &[ResultRow]) -> Vec<u8> {
    let mut out = String::with_capacity(64 + rows.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.experiment);
        out.push(',');
        out.push_str(&r.row.to_string());
        out.push(',');
        out.push_str(&r.check);
        out.push(',');
        out.push_str(&r.n.to_string());
        out.push(',');
        push_opt_float(&mut out, r.a);
        out.push(',');
        push_opt_float(&mut out, r.kappa);
        out.push(',');
        if let Some(m) = r.m {
            out.push_str(&m.to_string());
        }
        out.push(',');
        push_float(&mut out, r.measured);
        out.push(',');
        push_opt_float(&mut out, r.std_error);
        out.push(',');
        push_float(&mut out, r.formula);
        out.push(',');
        push_float(&mut out, r.residual);
        out.push(',');
        push_float(&mut out, r.budget);
        out.push(',');
        push_opt_float(&mut out, r.slope);
        out.push(',');
        out.push_str(&r.verdict);
        out.push('\n');
    }
    out.into_bytes()
}

/// JSON serialization: an array of row objects, field order fixed by the
/// struct, trailing newline.
pub fn json_bytes(rows: &[ResultRow]) -> Result<Vec<u8>, serde_json::Error> {
    let mut bytes = serde_json::to_vec_pretty(rows)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Everything needed to re-run: kind, seeds, configuration echo, and the
/// code version. elapsed_seconds is diagnostic and excluded from the
/// byte-determinism contract.
#[derive(Debug, Serialize)]
pub struct Manifest<'c> {
    pub kind: String,
    pub master_seed: u64,
    pub workers: usize,
    pub crate_version: &'static str,
    pub config: &'c ExperimentConfig,
    pub elapsed_seconds: f64,
}

pub fn write_outputs(
    dir: &Path,
    rows: &[ResultRow],
    manifest: &Manifest<'_>,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = std::fs::File::create(dir.join("results.csv"))?;
    csv.write_all(&csv_bytes(rows))?;
    let mut json = std::fs::File::create(dir.join("results.json"))?;
    json.write_all(&json_bytes(rows).map_err(std::io::Error::other)?)?;
    let mut mf = std::fs::File::create(dir.join("manifest.json"))?;
    let mut mf_bytes = serde_json::to_vec_pretty(manifest).map_err(std::io::Error::other)?;
    mf_bytes.push(b'\n');
    mf.write_all(&mf_bytes)?;
    Ok(())
}
