//! The release gate: nine numbered criteria covering closed forms, sampler
//! validity, evaluation-path agreement, the sampled and exact moment laws,
//! the bound property suites, and reproducibility. Each criterion produces
//! result rows plus a verdict; the suite prints one line per criterion and
//! a summary table, and passes only when every criterion does inside its
//! runtime budget.
//!
//! Rows deliberately carry no timing values, so two runs with the same seed
//! serialize to identical bytes. Elapsed times live beside the rows in the
//! reports and are never compared across runs.

use crate::asymptotics::{
    compare, first_order_budget, first_order_formula, residual_slope, Measured,
    DEFAULT_TOLERANCE_MULTIPLIER,
};
use crate::ensemble::{eigenangles_of, sample_angles_mcmc, sample_haar_so};
use crate::harness::config::{derive_seed, ExperimentConfig, ExperimentKind, McSettings};
use crate::harness::experiments::{
    h_scan_rows, kernel_check_rows, kernel_check_rows_mutated, moment_rows, sampler_statistics,
    theorem_verify_rows, KernelMutation, ANGLE_BINS,
};
use crate::harness::report::{csv_bytes, json_bytes, row_from_comparison, ResultRow};
use crate::harness::HarnessError;
use crate::kernels::{
    lorentzian_integral_om, lorentzian_power_bound, r1_quadratic_bound_check,
    sine_kernel_lipschitz_check, KernelContext,
};
use crate::moments::{
    h1_deviation_nodes, h_exact_nodes, log_deriv_from_angles, log_deriv_from_matrix, pole_rule,
    poly_basis_coeffs, scaled_ratio_x, taylor_truncation, EvaluationPoint, MonteCarloConfig,
    monte_carlo_over_angles, DEFAULT_QUADRATURE_NODES,
};
use crate::quadrature::{integrate_1d, QuadratureRule};
use crate::rng::RngStream;
use crate::stats::ks_two_sample;
use rand::Rng;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

/// Knobs shared by every criterion. The quick profile shrinks sample counts
/// and grids enough to finish the whole suite inside two minutes while still
/// exercising every code path.
#[derive(Clone, Copy, Debug)]
pub struct VerifySettings {
    pub seed: u64,
    pub workers: usize,
    pub nodes: usize,
    pub quick: bool,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self { seed: 1_000_003, workers: 8, nodes: DEFAULT_QUADRATURE_NODES, quick: false }
    }
}

/// Outcome of one criterion: its rows, a verdict folding in the runtime
/// budget, and a one-line summary for the report.
#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub index: usize,
    pub name: &'static str,
    pub statement: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_seconds: f64,
    pub rows: Vec<ResultRow>,
}

/// Outcome of the whole suite.
#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub criteria: Vec<CriterionReport>,
    pub all_passed: bool,
    pub elapsed_seconds: f64,
}

const CRITERION_NAMES: [(&str, &str); 9] = [
    (
        "closed-form-integrals",
        "density mass, inverse-sin^2 moment, and Lorentzian integral match closed forms to 1e-8",
    ),
    (
        "sampler-validity",
        "mean trace sits within four standard errors of the density oracle, the pooled eigenangle \
         histogram passes chi-square at p > 1e-3, and QR and Metropolis eigenangles agree \
         per coordinate at KS p > 1e-3",
    ),
    (
        "log-derivative-paths",
        "eigenangle-sum and resolvent-trace evaluations of the log derivative agree to 1e-8",
    ),
    (
        "first-order-moment-law",
        "sampled E[(1+x)^K] matches 1 - K a within 5 (a^2 + a/N) plus four standard errors",
    ),
    (
        "first-moment-residual",
        "exact h(1) minus its quadratic model stays below 10 N^3 (1-s)^3 and decays with \
         fitted slope 3.0 +- 0.1",
    ),
    (
        "second-moment-leading-order",
        "relative deviation of exact h(2) from N^2 (1-s)^2 shrinks along the scan and is \
         below 1e-2 by a = 1e-5",
    ),
    (
        "refined-law-reconstruction",
        "the prefactored reconstruction from exact h(0..3) tracks the refined law with \
         residual decay slope at least 2.98",
    ),
    (
        "bound-property-suites",
        "ratio bounds, Taylor remainders, basis identities, kernel envelopes, and tail-integral \
         bounds hold on randomized and gridded sweeps with zero violations",
    ),
    (
        "reproducibility",
        "repeated runs with one seed emit byte-identical result tables",
    ),
];

/// Per-criterion wall-clock budgets in seconds; None means the suite-level
/// budget is the only constraint.
const RUNTIME_CAPS: [Option<f64>; 9] =
    [Some(30.0), Some(300.0), None, Some(600.0), None, None, None, None, None];

const FULL_SUITE_SECONDS_CAP: f64 = 1800.0;
const QUICK_SUITE_SECONDS_CAP: f64 = 120.0;

/// The budgets above are calibrated for an eight-core host. The work is a
/// fixed number of core-seconds, so on a narrower machine the caps stretch
/// by the missing parallelism instead of failing on hardware alone.
fn runtime_cap_scale() -> f64 {
    let cores = std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1);
    8.0 / cores.min(8) as f64
}

/// Row accumulator that stamps the criterion label and keeps indices
/// sequential.
struct RowBuf {
    experiment: String,
    rows: Vec<ResultRow>,
}

impl RowBuf {
    fn new(index: usize) -> Self {
        Self { experiment: format!("criterion-{index}"), rows: Vec::new() }
    }

    #[allow(clippy::too_many_arguments)]
    fn push_full(
        &mut self,
        check: &str,
        n: usize,
        a: Option<f64>,
        kappa: Option<f64>,
        measured: f64,
        std_error: Option<f64>,
        formula: f64,
        residual: f64,
        budget: f64,
        pass: bool,
    ) {
        self.rows.push(ResultRow {
            experiment: self.experiment.clone(),
            row: self.rows.len(),
            check: check.to_string(),
            n,
            a,
            kappa,
            m: None,
            measured,
            std_error,
            formula,
            residual,
            budget,
            slope: None,
            verdict: if pass { "pass" } else { "fail" }.to_string(),
        });
    }

    /// |measured - formula| <= budget.
    fn push_bound(
        &mut self,
        check: &str,
        n: usize,
        a: Option<f64>,
        measured: f64,
        formula: f64,
        budget: f64,
    ) {
        let residual = (measured - formula).abs();
        self.push_full(check, n, a, None, measured, None, formula, residual, budget, residual <= budget);
    }

    /// measured <= ceiling.
    fn push_ceiling(&mut self, check: &str, n: usize, a: Option<f64>, measured: f64, ceiling: f64) {
        let residual = (measured - ceiling).max(0.0);
        self.push_full(check, n, a, None, measured, None, ceiling, residual, 0.0, measured <= ceiling);
    }

    /// measured > floor, the p-value convention.
    fn push_floor(&mut self, check: &str, n: usize, measured: f64, floor: f64) {
        let residual = (floor - measured).max(0.0);
        self.push_full(check, n, None, None, measured, None, floor, residual, 0.0, measured > floor);
    }

    fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.verdict == "fail").count()
    }
}

/// Runs one criterion by index (1 through 9).
pub fn run_criterion(index: usize, settings: &VerifySettings) -> Result<CriterionReport, HarnessError> {
    assert!((1..=9).contains(&index), "criteria are numbered 1 through 9");
    let start = Instant::now();
    let (buf, detail) = match index {
        1 => closed_form_integrals(settings)?,
        2 => sampler_validity(settings)?,
        3 => log_derivative_paths(settings)?,
        4 => first_order_moment_law(settings)?,
        5 => first_moment_residual(settings)?,
        6 => second_moment_leading_order(settings)?,
        7 => refined_law_reconstruction(settings)?,
        8 => bound_property_suites(settings)?,
        _ => reproducibility(settings)?,
    };
    let elapsed_seconds = start.elapsed().as_secs_f64();
    let cap = RUNTIME_CAPS[index - 1].map(|c| c * runtime_cap_scale());
    let within_cap = cap.is_none_or(|c| elapsed_seconds <= c);
    let failures = buf.failures();
    let mut detail = detail;
    if failures > 0 {
        write!(detail, "; {failures} row(s) failed").unwrap();
    }
    if !within_cap {
        write!(detail, "; exceeded the {:.0} s budget", cap.unwrap()).unwrap();
    }
    let (name, statement) = CRITERION_NAMES[index - 1];
    Ok(CriterionReport {
        index,
        name,
        statement,
        passed: failures == 0 && within_cap,
        detail,
        elapsed_seconds,
        rows: buf.rows,
    })
}

/// Runs all nine criteria in order, printing one line per criterion and a
/// summary table.
pub fn verify_suite(settings: &VerifySettings) -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut criteria = Vec::with_capacity(9);
    for index in 1..=9 {
        let report = run_criterion(index, settings)?;
        println!(
            "criterion {}: {} - {} ({} rows, {:.1} s): {}",
            report.index,
            if report.passed { "PASS" } else { "FAIL" },
            report.name,
            report.rows.len(),
            report.elapsed_seconds,
            report.detail,
        );
        criteria.push(report);
    }
    let elapsed_seconds = start.elapsed().as_secs_f64();
    let cap = if settings.quick { QUICK_SUITE_SECONDS_CAP } else { FULL_SUITE_SECONDS_CAP }
        * runtime_cap_scale();
    let within = elapsed_seconds <= cap;
    let all_passed = within && criteria.iter().all(|c| c.passed);

    println!();
    println!("{:-^76}", " verification summary ");
    for c in &criteria {
        println!("{:>2}  {:<28} {:>4} rows  {}", c.index, c.name, c.rows.len(), verdict_word(c.passed));
        println!("    {}", c.statement);
    }
    println!(
        "suite: {} in {:.1} s (budget {:.0} s, seed {}, {} workers{})",
        verdict_word(all_passed),
        elapsed_seconds,
        cap,
        settings.seed,
        settings.workers,
        if settings.quick { ", quick profile" } else { "" },
    );
    Ok(SuiteOutcome { criteria, all_passed, elapsed_seconds })
}

fn verdict_word(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Criterion 1: quadrature against the closed forms, at the sizes and
/// deformation values the formulas are quoted for.
fn closed_form_integrals(st: &VerifySettings) -> Result<(RowBuf, String), HarnessError> {
    let mut buf = RowBuf::new(1);
    let ns = [1usize, 5, 20, 100];
    let oms = [0.5, 1.0 - 0.9, 1.0 - 0.99, 1e-6];
    for &n in &ns {
        let ctx = KernelContext::new(n);
        let rule = QuadratureRule::oscillatory(st.nodes, 2.0 * n as f64)?;
        let mass = integrate_1d(|t| ctx.r1(t), 0.0, PI, &rule)?.value;
        buf.push_bound("r1-mass", n, None, mass, n as f64, 1e-8 * n as f64);
        let second = integrate_1d(|t| ctx.r1_over_sin_sq(t), 0.0, PI, &rule)?.value;
        let target = 2.0 * (n * n) as f64;
        buf.push_bound("r1-sin2", n, None, second, target, 1e-8 * target);
        for &om in &oms {
            let point = EvaluationPoint::from_one_minus_s(n, om, 0.0);
            let rule = pole_rule(&point, st.nodes)?;
            let val = integrate_1d(|t| point.lorentzian(t), 0.0, PI, &rule)?.value;
            let target = lorentzian_integral_om(om);
            buf.push_bound("lorentzian-mass", n, Some(point.a()), val, target, 1e-8 * target);
        }
    }

    // The checks must be able to fail: flipping the sign of the density
    // integrand has to break every mass check it enters.
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::KernelCheck);
    cfg.grid.n = vec![1, 5];
    cfg.grid.a = vec![0.5];
    cfg.quadrature.nodes = st.nodes;
    let mutated = kernel_check_rows_mutated(&cfg, KernelMutation::FlipR1Sign)?;
    let undetected = mutated
        .iter()
        .filter(|r| r.check.starts_with("r1-") && r.verdict == "pass")
        .count();
    buf.push_ceiling("mutation-detected", 1, None, undetected as f64, 0.0);

    let detail = format!(
        "{} integrals at relative accuracy 1e-8, sign mutation detected",
        buf.rows.len() - 1,
    );
    Ok((buf, detail))
}

/// Criterion 2: the Haar sampler against the one-point density and against
/// an independent Metropolis chain for the joint density.
fn sampler_validity(st: &VerifySettings) -> Result<(RowBuf, String), HarnessError> {
    let mut buf = RowBuf::new(2);
    let samples = if st.quick { 4_000 } else { 20_000 };
    let mc = MonteCarloConfig {
        samples,
        master_seed: derive_seed(st.seed, 200),
        workers: st.workers,
    };
    let ((trace, oracle), p_hist) = sampler_statistics(10, &mc, ANGLE_BINS, st.nodes)?;
    let report = compare(
        EvaluationPoint::new(10, 1.0, 0.0),
        Measured::Sampled(trace),
        oracle,
        0.0,
        DEFAULT_TOLERANCE_MULTIPLIER,
    );
    let mut row = row_from_comparison(&buf.experiment, buf.rows.len(), "trace-mean", &report);
    row.a = None;
    row.kappa = None;
    buf.rows.push(row);
    buf.push_floor("angle-hist-p", 10, p_hist, 1e-3);

    let (ks_sizes, draws): (&[usize], usize) =
        if st.quick { (&[1, 2], 2_000) } else { (&[1, 2, 3], 10_000) };
    for (i, &n) in ks_sizes.iter().enumerate() {
        let mut rng = RngStream::new(derive_seed(st.seed, 210 + i as u64), 0).rng();
        let mut qr_coords: Vec<Vec<f64>> = vec![Vec::with_capacity(draws); n];
        for _ in 0..draws {
            let x = sample_haar_so(n, &mut rng);
            let mut angles = eigenangles_of(&x).angles;
            angles.sort_by(|p, q| p.total_cmp(q));
            for (j, &t) in angles.iter().enumerate() {
                qr_coords[j].push(t);
            }
        }
        let mut mcmc_coords: Vec<Vec<f64>> = vec![Vec::with_capacity(draws); n];
        for mut draw in sample_angles_mcmc(n, draws, &mut rng) {
            draw.sort_by(|p, q| p.total_cmp(q));
            for (j, &t) in draw.iter().enumerate() {
                mcmc_coords[j].push(t);
            }
        }
        for j in 0..n {
            let ks = ks_two_sample(&qr_coords[j], &mcmc_coords[j]);
            buf.push_floor(&format!("ks-coordinate-{j}"), n, ks.p_value, 1e-3);
        }
    }
    let detail = format!(
        "trace and histogram over {samples} draws, KS on {draws} draws per size",
    );
    Ok((buf, detail))
}

/// Criterion 3: both evaluation paths of the log derivative on random
/// matrices and random deformation values.
fn log_derivative_paths(st: &VerifySettings) -> Result<(RowBuf, String), HarnessError> {
    let mut buf = RowBuf::new(3);
    let pairs = if st.quick { 20 } else { 100 };
    for (i, &n) in [5usize, 20].iter().enumerate() {
        let mut rng = RngStream::new(derive_seed(st.seed, 300 + i as u64), 0).rng();
        let mut max_gap = 0.0f64;
        for _ in 0..pairs {
            let (x, angles) = loop {
                let x = sample_haar_so(n, &mut rng);
                let ea = eigenangles_of(&x);
                if !ea.degenerate {
                    break (x, ea.angles);
                }
            };
            let s: f64 = rng.gen_range(0.0..0.9);
            let om = 1.0 - s;
            let gap = (log_deriv_from_angles(om, &angles) - log_deriv_from_matrix(om, &x)).abs();
            max_gap = max_gap.max(gap);
        }
        buf.push_ceiling("path-agreement", n, None, max_gap, 1e-8);
    }
    let detail = format!("{pairs} matrix/deformation pairs per size");
    Ok((buf, detail))
}

/// Criterion 4: sampled scaled moments against the leading-order law. One
/// ensemble sweep serves every (a, K) combination: the scaled ratio is
/// computed once per a and raised to each power.
fn first_order_moment_law(st: &VerifySettings) -> Result<(RowBuf, String), HarnessError> {
    let mut buf = RowBuf::new(4);
    let n = 100usize;
    let (kappas, a_values, samples): (&[f64], &[f64], u64) = if st.quick {
        (&[1.5], &[0.01], 2_000)
    } else {
        (&[0.5, 1.5, 2.5], &[0.01, 0.005], 100_000)
    };
    let points: Vec<EvaluationPoint> =
        a_values.iter().map(|&a| EvaluationPoint::new(n, a, 0.0)).collect();
    let mc = MonteCarloConfig {
        samples,
        master_seed: derive_seed(st.seed, 400),
        workers: st.workers,
    };
    let out = monte_carlo_over_angles(n, &mc, points.len() * kappas.len(), |angles, vals| {
        let mut idx = 0;
        for point in &points {
            let base = 1.0 + scaled_ratio_x(point, angles);
            for &kappa in kappas {
                vals[idx] = base.powf(kappa);
                idx += 1;
            }
        }
    });
    let mut idx = 0;
    for &a in a_values {
        for &kappa in kappas {
            let report = compare(
                EvaluationPoint::new(n, a, kappa),
                Measured::Sampled(out.stats[idx].estimate()),
                first_order_formula(kappa, a),
                first_order_budget(n, a),
                DEFAULT_TOLERANCE_MULTIPLIER,
            );
            let row = row_from_comparison(&buf.experiment, buf.rows.len(), "first-order-law", &report);
            buf.rows.push(row);
            idx += 1;
        }
    }
    let detail = format!(
        "{} (a, K) combinations from one sweep of {} draws at N = {}",
        buf.rows.len(),
        samples,
        n,
    );
    Ok((buf, detail))
}

/// Criterion 5: the exact first moment against its quadratic model, with
/// the cubic remainder certified pointwise and by decay rate.
fn first_moment_residual(st: &VerifySettings) -> Result<(RowBuf, String), HarnessError> {
    let mut buf = RowBuf::new(5);
    let sizes: &[usize] = if st.quick { &[10] } else { &[10, 50] };
    let a_values = [1e-3, 1e-4, 1e-5, 1e-6];
    for &n in sizes {
        let nf = n as f64;
        let mut scan = Vec::new();
        for &a in &a_values {
            let point = EvaluationPoint::new(n, a, 0.0);
            let om = point.one_minus_s();
            let resid = h1_deviation_nodes(&point, st.nodes)?.abs();
            scan.push((om, resid));
            buf.push_ceiling("h1-ratio", n, Some(a), resid / (nf * om).powi(3), 10.0);
        }
        let fit = residual_slope(&scan);
        buf.push_bound("h1-slope", n, None, fit.slope, 3.0, 0.1);
    }
    let detail = format!("{} scan points per size plus a fitted slope", a_values.len());
    Ok((buf, detail))
}

/// Criterion 6: the exact second moment against its leading term.
fn second_moment_leading_order(st: &VerifySettings) -> Result<(RowBuf, String), HarnessError> {
    let mut buf = RowBuf::new(6);
    let n = 5usize;
    let a_values = [1e-3, 1e-4, 1e-5, 1e-6];
    let mut prev: Option<f64> = None;
    let mut rel_at_target = f64::MAX;
    for &a in &a_values {
        let point = EvaluationPoint::new(n, a, 0.0);
        let om = point.one_minus_s();
        let lead = (n * n) as f64 * om * om;
        let rel = (h_exact_nodes(&point, 2, st.nodes)? - lead).abs() / lead;
        if let Some(p) = prev {
            buf.push_ceiling("h2-decrease", n, Some(a), rel, p);
        }
        if a == 1e-5 {
            rel_at_target = rel;
        }
        prev = Some(rel);
    }
    buf.push_ceiling("h2-smallness", n, Some(1e-5), rel_at_target, 1e-2);
    let detail = format!("monotone over {} scan points, small by a = 1e-5", a_values.len());
    Ok((buf, detail))
}

/// Criterion 7: reconstruction of the normalized moment from exact raw
/// moments, delegated to the theorem-verify experiment at its default grid.
fn refined_law_reconstruction(st: &VerifySettings) -> Result<(RowBuf, String), HarnessError> {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::TheoremVerify);
    cfg.quadrature.nodes = st.nodes;
    if st.quick {
        cfg.grid.n = vec![2];
        cfg.grid.kappa = vec![1.5];
    }
    let mut buf = RowBuf::new(7);
    for mut row in theorem_verify_rows(&cfg)? {
        row.experiment = buf.experiment.clone();
        row.row = buf.rows.len();
        buf.rows.push(row);
    }
    let slopes = buf.rows.iter().filter(|r| r.check == "reconstruction-slope").count();
    let detail = format!("{} pointwise comparisons and {} decay slopes", buf.rows.len() - slopes, slopes);
    Ok((buf, detail))
}

/// Criterion 8: the five bound families, randomized where the claim is
/// about arbitrary configurations and gridded where it is about functions.
fn bound_property_suites(st: &VerifySettings) -> Result<(RowBuf, String), HarnessError> {
    let mut buf = RowBuf::new(8);

    // Ratio bound: the scaled ratio of an arbitrary angle configuration
    // stays inside its closed interval, at deformations far outside the
    // feasibility region included.
    let configs = if st.quick { 5_000 } else { 100_000 };
    let mut rng = RngStream::new(derive_seed(st.seed, 800), 0).rng();
    let mut violations = 0u64;
    for _ in 0..configs {
        let n = rng.gen_range(1..=50usize);
        let s: f64 = rng.gen_range(1e-6..0.9999);
        let point = EvaluationPoint::from_one_minus_s(n, 1.0 - s, 0.0);
        let angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let x = scaled_ratio_x(&point, &angles);
        let slack = 1e-10 * n as f64;
        if x < point.x_lower_bound() - slack || x > point.x_upper_bound() + slack {
            violations += 1;
        }
    }
    buf.push_ceiling("ratio-bound-violations", 50, None, violations as f64, 0.0);

    // Taylor remainder: truncation error against its certified constant on
    // a grid spanning the whole validity half-line up to u = 10.
    let step: f64 = if st.quick { 0.05 } else { 0.005 };
    let count = ((10.5 / step).round() as usize) + 1;
    let mut taylor_violations = 0u64;
    for &kappa in &[0.5, 1.5, 2.7] {
        for &m in &[3usize, 5] {
            for k in 0..count {
                let u = -0.5 + k as f64 * step;
                let exact = (1.0 + u).powf(kappa);
                let (truncated, bound) = taylor_truncation(kappa, u, m);
                // rounding slack: both sides are computed to a few ulps
                if (exact - truncated).abs() > bound + 1e-13 * (1.0 + exact.abs()) {
                    taylor_violations += 1;
                }
            }
        }
    }
    buf.push_ceiling("taylor-remainder-violations", 1, None, taylor_violations as f64, 0.0);

    // Basis identities, exact in integer arithmetic.
    let mut basis_violations = 0u64;
    for n in 0..=64usize {
        let c = poly_basis_coeffs(n);
        let sum: i128 = c.iter().sum();
        let at_two: i128 = c.iter().enumerate().map(|(k, &v)| v * (1i128 << k)).sum();
        let abs_sum: i128 = c.iter().map(|&v| v.abs()).sum();
        let expected_sum = i128::from(n == 0);
        if c[n] != 1 || sum != expected_sum || at_two != 1 || abs_sum != 1i128 << n {
            basis_violations += 1;
        }
    }
    buf.push_ceiling("basis-identity-violations", 64, None, basis_violations as f64, 0.0);

    // Kernel envelopes on dense grids.
    let grid_points = if st.quick { 1_000 } else { 10_000 };
    for &n in &[1usize, 2, 5, 10, 50] {
        let ctx = KernelContext::new(n);
        let grid: Vec<f64> =
            (0..grid_points).map(|k| PI * k as f64 / (grid_points - 1) as f64).collect();
        let quad_ok = r1_quadratic_bound_check(&ctx, &grid).is_ok();
        buf.push_ceiling("r1-envelope-violations", n, None, f64::from(u8::from(!quad_ok)), 0.0);
        let offsets: Vec<f64> = (0..grid_points)
            .map(|k| -PI + 2.0 * PI * k as f64 / (grid_points - 1) as f64)
            .collect();
        let lip_ok = sine_kernel_lipschitz_check(&ctx, &offsets).is_ok();
        buf.push_ceiling("sine-kernel-envelope-violations", n, None, f64::from(u8::from(!lip_ok)), 0.0);
    }

    // Tail-integral bounds, integrated with the pole-graded rule.
    for &l in &[2u32, 3, 4] {
        for &s in &[0.5, 0.9, 0.99] {
            let om = 1.0 - s;
            let rule = QuadratureRule::pole_graded(st.nodes, om, 1.0)?;
            let val = integrate_1d(
                |t| {
                    let half_sin = (0.5 * t).sin();
                    let h2 = half_sin * half_sin;
                    h2 / (om * om + 4.0 * s * h2).powi(l as i32)
                },
                0.0,
                PI,
                &rule,
            )?
            .value;
            let bound = lorentzian_power_bound(s, l)?;
            buf.push_ceiling(&format!("tail-integral-l{l}-s{s}"), 1, None, val, bound);
        }
    }

    let detail = format!(
        "{configs} random ratio configurations, {} Taylor grid points per (K, m), \
         65 basis rows, 10 envelope grids, 9 tail integrals",
        count,
    );
    Ok((buf, detail))
}

/// Criterion 9: emission determinism on miniature configurations of the
/// three row-producing experiment families.
fn reproducibility(st: &VerifySettings) -> Result<(RowBuf, String), HarnessError> {
    let mut buf = RowBuf::new(9);

    let mut kernel_cfg = ExperimentConfig::default_for(ExperimentKind::KernelCheck);
    kernel_cfg.grid.n = vec![1, 5];
    kernel_cfg.grid.a = vec![0.5, 0.05];
    kernel_cfg.quadrature.nodes = st.nodes;

    let mut moment_cfg = ExperimentConfig::default_for(ExperimentKind::Moment);
    moment_cfg.grid.n = vec![10];
    moment_cfg.grid.a = vec![0.05];
    moment_cfg.grid.kappa = vec![1.5];
    moment_cfg.mc = McSettings {
        samples: 2_000,
        master_seed: derive_seed(st.seed, 900),
        workers: st.workers,
    };

    let mut h_cfg = ExperimentConfig::default_for(ExperimentKind::HScan);
    h_cfg.grid.n = vec![5];
    h_cfg.grid.a = vec![1e-2, 1e-3, 1e-4, 1e-5];
    h_cfg.quadrature.nodes = st.nodes;

    let mut replay = |name: &str,
                      first: Vec<ResultRow>,
                      second: Vec<ResultRow>|
     -> Result<(), HarnessError> {
        let same = csv_bytes(&first) == csv_bytes(&second)
            && json_bytes(&first)? == json_bytes(&second)?;
        buf.push_ceiling(&format!("replay-{name}"), 0, None, f64::from(u8::from(!same)), 0.0);
        Ok(())
    };
    replay("kernel-check", kernel_check_rows(&kernel_cfg)?, kernel_check_rows(&kernel_cfg)?)?;
    replay("moment", moment_rows(&moment_cfg)?, moment_rows(&moment_cfg)?)?;
    replay("h-scan", h_scan_rows(&h_cfg)?, h_scan_rows(&h_cfg)?)?;

    Ok((buf, "three experiment families emitted twice and compared byte for byte".to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> VerifySettings {
        VerifySettings { seed: 7_777, workers: 4, nodes: 16, quick: true }
    }

    #[test]
    fn criterion_names_are_distinct() {
        let mut names: Vec<&str> = CRITERION_NAMES.iter().map(|(n, _)| *n).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 9);
    }

    #[test]
    fn closed_forms_pass_quick() {
        let report = run_criterion(1, &quick()).unwrap();
        assert!(report.passed, "{:?}", report.detail);
        // two mass rows per size, four Lorentzian rows per size, one
        // mutation-sensitivity row
        assert_eq!(report.rows.len(), 4 * 2 + 4 * 4 + 1);
    }

    #[test]
    fn log_derivative_paths_pass_quick() {
        let report = run_criterion(3, &quick()).unwrap();
        assert!(report.passed, "{:?}", report.detail);
    }

    #[test]
    fn exact_moment_criteria_pass_quick() {
        for index in [5, 6] {
            let report = run_criterion(index, &quick()).unwrap();
            assert!(report.passed, "criterion {index}: {}", report.detail);
        }
    }

    #[test]
    fn property_suites_pass_quick() {
        let report = run_criterion(8, &quick()).unwrap();
        assert!(report.passed, "{:?}", report.detail);
        assert!(report.rows.iter().all(|r| r.verdict == "pass"));
    }

    #[test]
    fn reproducibility_passes_quick() {
        let report = run_criterion(9, &quick()).unwrap();
        assert!(report.passed, "{:?}", report.detail);
    }
}
