//! Experiment driver behind the `rmtlab` binary: configuration loading,
//! row emission for each experiment kind, deterministic serialization, and
//! the nine-criterion verification suite.
//!
//! The contract for every run: the same configuration and seed produce the
//! same `results.csv` and `results.json` byte for byte, rows ordered by
//! grid index. `manifest.json` echoes the configuration and carries the
//! only wall-clock value. Points outside an expansion's validity region
//! become indeterminate rows, never errors; a nonzero exit means either a
//! hard failure (bad config, i/o) or, for the full suite, a criterion that
//! did not pass.

pub mod config;
pub mod experiments;
pub mod report;
pub mod verify;

pub use config::{ExperimentConfig, ExperimentKind};
pub use report::ResultRow;
pub use verify::{run_criterion, verify_suite, CriterionReport, SuiteOutcome, VerifySettings};

use crate::kernels::KernelError;
use crate::moments::MomentError;
use crate::quadrature::QuadratureError;
use report::{write_outputs, Manifest};
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("could not write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// What a completed run produced: the emitted rows and, for the full
/// suite, the per-criterion reports.
#[derive(Debug)]
pub struct RunOutcome {
    pub kind: ExperimentKind,
    pub rows: Vec<ResultRow>,
    pub suite: Option<SuiteOutcome>,
    pub out_dir: PathBuf,
    pub elapsed_seconds: f64,
}

impl RunOutcome {
    /// 0 on success, 1 when the verification suite ran and failed.
    pub fn exit_code(&self) -> i32 {
        match &self.suite {
            Some(suite) if !suite.all_passed => 1,
            _ => 0,
        }
    }
}

/// Runs one experiment end to end: validate, emit rows, write the output
/// triple. The full suite additionally prints its per-criterion report and
/// concatenates every criterion's rows into the output tables.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    let kind = cfg.kind.ok_or(config::ConfigError::MissingKind)?;
    cfg.validate(kind)?;
    let start = Instant::now();
    let (rows, suite) = match kind {
        ExperimentKind::Sample => (experiments::sample_rows(cfg)?, None),
        ExperimentKind::KernelCheck => (experiments::kernel_check_rows(cfg)?, None),
        ExperimentKind::Moment => (experiments::moment_rows(cfg)?, None),
        ExperimentKind::HScan => (experiments::h_scan_rows(cfg)?, None),
        ExperimentKind::TheoremVerify => (experiments::theorem_verify_rows(cfg)?, None),
        ExperimentKind::FullSuite => {
            let settings = VerifySettings {
                seed: cfg.mc.master_seed,
                workers: cfg.mc.workers,
                nodes: cfg.quadrature.nodes,
                quick: cfg.quick,
            };
            let suite = verify_suite(&settings)?;
            let rows = suite.criteria.iter().flat_map(|c| c.rows.iter().cloned()).collect();
            (rows, Some(suite))
        }
    };
    let elapsed_seconds = start.elapsed().as_secs_f64();

    let out_dir = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("rmtlab-out").join(kind.label()));
    let manifest = Manifest {
        kind: kind.label().to_string(),
        master_seed: cfg.mc.master_seed,
        workers: cfg.mc.workers,
        crate_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        elapsed_seconds,
    };
    write_outputs(&out_dir, &rows, &manifest)
        .map_err(|source| HarnessError::Io { path: out_dir.clone(), source })?;

    Ok(RunOutcome { kind, rows, suite, out_dir, elapsed_seconds })
}
