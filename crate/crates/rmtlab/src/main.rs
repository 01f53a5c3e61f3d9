//! Command line front end. All logic lives in the library; this file only
//! parses arguments, applies overrides, and maps outcomes to exit codes:
//! 0 success, 1 verification failure, 2 hard error.

use clap::Parser;
use rmtlab::harness::{self, ExperimentConfig, ExperimentKind};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

/// Reproducible experiments over eigenangle statistics of Haar-random
/// odd special orthogonal matrices.
#[derive(Parser)]
#[command(name = "rmtlab", version)]
struct Cli {
    /// Experiment kind: sample, kernel-check, moment, h-scan,
    /// theorem-verify, or full-suite.
    kind: String,
    /// JSON configuration; omitted fields take the kind's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread override.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Shrink grids and sample counts for a fast smoke run.
    #[arg(long)]
    quick: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("rmtlab: {err}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let kind = ExperimentKind::from_str(&cli.kind)?;
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default_for(kind),
    };
    cfg.kind = Some(kind);
    if let Some(seed) = cli.seed {
        cfg.mc.master_seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.mc.workers = workers;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if cli.quick {
        cfg.quick = true;
    }

    let outcome = harness::run(&cfg)?;
    let mut pass = 0usize;
    let mut fail = 0usize;
    let mut indeterminate = 0usize;
    for row in &outcome.rows {
        match row.verdict.as_str() {
            "pass" => pass += 1,
            "fail" => fail += 1,
            _ => indeterminate += 1,
        }
    }
    println!(
        "{}: {} rows ({pass} pass, {fail} fail, {indeterminate} indeterminate) -> {} in {:.1} s",
        outcome.kind,
        outcome.rows.len(),
        outcome.out_dir.display(),
        outcome.elapsed_seconds,
    );
    Ok(ExitCode::from(outcome.exit_code() as u8))
}
