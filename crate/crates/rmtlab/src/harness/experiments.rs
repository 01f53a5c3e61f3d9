//! Row builders for the experiment kinds. Each builder walks its grids in
//! declaration order and emits rows with sequential indices, so output
//! order never depends on thread scheduling.

use crate::asymptotics::{
    compare, refined_budget, refined_deviation, refined_formula, first_order_budget,
    first_order_formula, reconstruction_deviation, residual_slope, Measured,
    DEFAULT_TOLERANCE_MULTIPLIER,
};
use crate::harness::config::{derive_seed, ExperimentConfig};
use crate::harness::report::{row_from_comparison, ResultRow};
use crate::harness::HarnessError;
use crate::kernels::{lorentzian_integral_om, KernelContext};
use crate::moments::{
    h1_deviation_nodes, h_exact_nodes, pole_rule, scaled_moment_mc, EvaluationPoint,
    MonteCarloConfig,
};
use crate::quadrature::{integrate_1d, QuadratureRule};
use std::f64::consts::PI;

/// Relative accuracy the closed-form kernel checks are held to.
pub const KERNEL_CHECK_REL_TOL: f64 = 1e-8;

/// Deliberate defect injected into the kernel-check integrand so tests can
/// confirm the checks actually bite.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum KernelMutation {
    None,
    FlipR1Sign,
}

pub fn kernel_check_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    kernel_check_rows_mutated(cfg, KernelMutation::None)
}

pub(crate) fn kernel_check_rows_mutated(
    cfg: &ExperimentConfig,
    mutation: KernelMutation,
) -> Result<Vec<ResultRow>, HarnessError> {
    let nodes = cfg.quadrature.nodes;
    let sign = if mutation == KernelMutation::FlipR1Sign { -1.0 } else { 1.0 };
    let mut rows = Vec::new();
    let mut push = |check: &str, n: usize, a: Option<f64>, measured: f64, formula: f64| {
        let residual = (measured - formula).abs();
        let budget = KERNEL_CHECK_REL_TOL * formula.abs();
        rows.push(ResultRow {
            experiment: "kernel-check".into(),
            row: rows.len(),
            check: check.into(),
            n,
            a,
            kappa: None,
            m: None,
            measured,
            std_error: None,
            formula,
            residual,
            budget,
            slope: None,
            verdict: if residual <= budget { "pass" } else { "fail" }.into(),
        });
    };

    for &n in &cfg.grid.n {
        let ctx = KernelContext::new(n);
        let rule = QuadratureRule::oscillatory(nodes, 2.0 * n as f64)?;
        let mass = integrate_1d(|t| sign * ctx.r1(t), 0.0, PI, &rule)?;
        push("r1-mass", n, None, mass.value, n as f64);
        let sin2 = integrate_1d(|t| sign * ctx.r1_over_sin_sq(t), 0.0, PI, &rule)?;
        push("r1-sin2", n, None, sin2.value, 2.0 * (n * n) as f64);
    }
    for &n in &cfg.grid.n {
        for &a in &cfg.grid.a {
            let point = EvaluationPoint::new(n, a, 0.0);
            let om = point.one_minus_s();
            let rule = pole_rule(&point, nodes)?;
            let out = integrate_1d(|t| point.lorentzian(t), 0.0, PI, &rule)?;
            push("lorentzian-mass", n, Some(a), out.value, lorentzian_integral_om(om));
        }
    }
    Ok(rows)
}

/// Monte Carlo scaled moments against the leading-order law. Infeasible
/// points are recorded as indeterminate without sampling: the non-integer
/// power has no remainder control there.
pub fn moment_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let mut rows = Vec::new();
    let mut idx = 0u64;
    for &n in &cfg.grid.n {
        for &a in &cfg.grid.a {
            for &kappa in &cfg.grid.kappa {
                let point = EvaluationPoint::new(n, a, kappa);
                let row = rows.len();
                let formula = first_order_formula(kappa, a);
                let budget = first_order_budget(n, a);
                if !point.taylor_feasible() {
                    rows.push(ResultRow {
                        experiment: "moment".into(),
                        row,
                        check: "scaled-moment".into(),
                        n,
                        a: Some(a),
                        kappa: Some(kappa),
                        m: None,
                        measured: 0.0,
                        std_error: None,
                        formula,
                        residual: 0.0,
                        budget,
                        slope: None,
                        verdict: "indeterminate".into(),
                    });
                    idx += 1;
                    continue;
                }
                let mc = MonteCarloConfig {
                    samples: cfg.mc.samples,
                    master_seed: derive_seed(cfg.mc.master_seed, idx),
                    workers: cfg.mc.workers,
                };
                let est = scaled_moment_mc(&point, &mc);
                let report = compare(
                    point,
                    Measured::Sampled(est.estimate),
                    formula,
                    budget,
                    DEFAULT_TOLERANCE_MULTIPLIER,
                );
                rows.push(row_from_comparison("moment", row, "scaled-moment", &report));
                idx += 1;
            }
        }
    }
    Ok(rows)
}

/// Exact h(1) and h(2) scans: per-point residuals against the leading
/// polynomials plus per-N fitted slopes. The h(1) residual column comes
/// from the cancellation-free deviation form; the h(2) rows check that the
/// leading term dominates pointwise, with the slope row certifying that the
/// relative deviation actually shrinks along the scan.
pub fn h_scan_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let nodes = cfg.quadrature.nodes;
    let mut rows = Vec::new();
    for &n in &cfg.grid.n {
        let nf = n as f64;
        let mut h1_scan = Vec::new();
        let mut h2_scan = Vec::new();
        for &a in &cfg.grid.a {
            let point = EvaluationPoint::new(n, a, 0.0);
            let om = point.one_minus_s();
            let h1 = h_exact_nodes(&point, 1, nodes)?;
            let resid = h1_deviation_nodes(&point, nodes)?.abs();
            let model = -nf * om + nf * (nf - 1.0) * om * om;
            let budget = 10.0 * nf.powi(3) * om.powi(3);
            h1_scan.push((om, resid));
            rows.push(ResultRow {
                experiment: "h-scan".into(),
                row: rows.len(),
                check: "h1-residual".into(),
                n,
                a: Some(a),
                kappa: None,
                m: None,
                measured: h1,
                std_error: None,
                formula: model,
                residual: resid,
                budget,
                slope: None,
                verdict: if resid <= budget { "pass" } else { "fail" }.into(),
            });

            let h2 = h_exact_nodes(&point, 2, nodes)?;
            let lead = nf * nf * om * om;
            let rel = (h2 - lead).abs() / lead;
            h2_scan.push((om, rel));
            rows.push(ResultRow {
                experiment: "h-scan".into(),
                row: rows.len(),
                check: "h2-relative".into(),
                n,
                a: Some(a),
                kappa: None,
                m: None,
                measured: h2,
                std_error: None,
                formula: lead,
                residual: rel,
                budget: 1.0,
                slope: None,
                verdict: if rel < 1.0 { "pass" } else { "fail" }.into(),
            });
        }
        if h1_scan.len() >= 4 {
            let fit1 = residual_slope(&h1_scan);
            rows.push(slope_row("h-scan", rows.len(), "h1-slope", n, fit1.slope, 3.0, 0.1));
            let fit2 = residual_slope(&h2_scan);
            let ok = fit2.slope >= 0.95;
            rows.push(ResultRow {
                experiment: "h-scan".into(),
                row: rows.len(),
                check: "h2-slope".into(),
                n,
                a: None,
                kappa: None,
                m: None,
                measured: fit2.slope,
                std_error: None,
                formula: 1.0,
                residual: (1.0 - fit2.slope).max(0.0),
                budget: 0.05,
                slope: Some(fit2.slope),
                verdict: if ok { "pass" } else { "fail" }.into(),
            });
        }
    }
    Ok(rows)
}

fn slope_row(
    experiment: &str,
    row: usize,
    check: &str,
    n: usize,
    slope: f64,
    target: f64,
    tol: f64,
) -> ResultRow {
    let residual = (slope - target).abs();
    ResultRow {
        experiment: experiment.into(),
        row,
        check: check.into(),
        n,
        a: None,
        kappa: None,
        m: None,
        measured: slope,
        std_error: None,
        formula: target,
        residual,
        budget: tol,
        slope: Some(slope),
        verdict: if residual <= tol { "pass" } else { "fail" }.into(),
    }
}

/// Minimum fitted decay exponent accepted for the reconstruction residual.
/// The residual is cubic with an O(a) curvature correction across the scan,
/// so the fit can sit a hair under 3; a genuine quadratic defect measures
/// near 2 and still fails by a wide margin.
pub const RECONSTRUCTION_SLOPE_FLOOR: f64 = 2.98;

/// Rebuilds the normalized moment from exact h(0..3) via the scale
/// prefactor and compares against the refined law pointwise and by
/// residual decay rate.
pub fn theorem_verify_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let nodes = cfg.quadrature.nodes;
    let m = cfg.grid.m[0];
    let mut rows = Vec::new();
    for &n in &cfg.grid.n {
        let mut h_by_a = Vec::new();
        for &a in &cfg.grid.a {
            let point = EvaluationPoint::new(n, a, 0.0);
            let mut h = [0.0; 4];
            for (order, slot) in h.iter_mut().enumerate() {
                *slot = h_exact_nodes(&point, order, nodes)?;
            }
            h_by_a.push((a, h));
        }
        for &kappa in &cfg.grid.kappa {
            let mut scan = Vec::new();
            for &(a, h) in &h_by_a {
                let recon_dev = reconstruction_deviation(kappa, n, a, &h);
                let law_dev = refined_deviation(kappa, a, n);
                let resid = (recon_dev - law_dev).abs();
                let budget = refined_budget(n, a, m);
                let ok = resid <= DEFAULT_TOLERANCE_MULTIPLIER * budget;
                scan.push((a, resid));
                rows.push(ResultRow {
                    experiment: "theorem-verify".into(),
                    row: rows.len(),
                    check: "refined-reconstruction".into(),
                    n,
                    a: Some(a),
                    kappa: Some(kappa),
                    m: Some(m),
                    measured: 1.0 + recon_dev,
                    std_error: None,
                    formula: refined_formula(kappa, a, n, m),
                    residual: resid,
                    budget,
                    slope: None,
                    verdict: if ok { "pass" } else { "fail" }.into(),
                });
            }
            if scan.len() >= 4 {
                let fit = residual_slope(&scan);
                let ok = fit.slope >= RECONSTRUCTION_SLOPE_FLOOR;
                rows.push(ResultRow {
                    experiment: "theorem-verify".into(),
                    row: rows.len(),
                    check: "reconstruction-slope".into(),
                    n,
                    a: None,
                    kappa: Some(kappa),
                    m: Some(m),
                    measured: fit.slope,
                    std_error: None,
                    formula: 3.0,
                    residual: (3.0 - fit.slope).max(0.0),
                    budget: 3.0 - RECONSTRUCTION_SLOPE_FLOOR,
                    slope: Some(fit.slope),
                    verdict: if ok { "pass" } else { "fail" }.into(),
                });
            }
        }
    }
    Ok(rows)
}

/// Number of histogram bins for the eigenangle density check.
pub const ANGLE_BINS: usize = 50;

/// Haar-sampler statistics per N: mean trace against the quadrature oracle
/// and a chi-square test of the pooled eigenangle histogram against the
/// one-point density.
pub fn sample_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let mut rows = Vec::new();
    for (i, &n) in cfg.grid.n.iter().enumerate() {
        let mc = MonteCarloConfig {
            samples: cfg.mc.samples,
            master_seed: derive_seed(cfg.mc.master_seed, i as u64),
            workers: cfg.mc.workers,
        };
        let (trace, chi2) = sampler_statistics(n, &mc, ANGLE_BINS, cfg.quadrature.nodes)?;
        let report = compare(
            EvaluationPoint::new(n, 1.0, 0.0),
            Measured::Sampled(trace.0),
            trace.1,
            0.0,
            DEFAULT_TOLERANCE_MULTIPLIER,
        );
        let mut row = row_from_comparison("sample", rows.len(), "trace-mean", &report);
        row.a = None;
        row.kappa = None;
        rows.push(row);

        let p = chi2;
        rows.push(ResultRow {
            experiment: "sample".into(),
            row: rows.len(),
            check: "angle-hist-p".into(),
            n,
            a: None,
            kappa: None,
            m: None,
            measured: p,
            std_error: None,
            formula: 1e-3,
            residual: (1e-3 - p).max(0.0),
            budget: 0.0,
            slope: None,
            verdict: if p > 1e-3 { "pass" } else { "fail" }.into(),
        });
    }
    Ok(rows)
}

/// Shared sweep for the sampler checks: one Monte Carlo pass yielding the
/// trace estimate with its quadrature oracle, and the chi-square p-value of
/// the pooled eigenangle histogram against the one-point density.
pub(crate) fn sampler_statistics(
    n: usize,
    mc: &MonteCarloConfig,
    bins: usize,
    nodes: usize,
) -> Result<((crate::stats::MomentEstimate, f64), f64), HarnessError> {
    use crate::moments::monte_carlo_over_angles;
    use crate::stats::chi_square_test;

    let width = PI / bins as f64;
    let out = monte_carlo_over_angles(n, mc, 1 + bins, |angles, vals| {
        vals.fill(0.0);
        let mut tr = 1.0;
        for &t in angles {
            tr += 2.0 * t.cos();
            let b = ((t / width) as usize).min(bins - 1);
            vals[1 + b] += 1.0;
        }
        vals[0] = tr;
    });

    let ctx = KernelContext::new(n);
    let rule = QuadratureRule::oscillatory(nodes, 2.0 * n as f64)?;
    let oracle = 1.0
        + integrate_1d(|t| 2.0 * t.cos() * ctx.r1(t), 0.0, PI, &rule)?.value;

    let draws = out.total_draws as f64;
    let observed: Vec<u64> = out.stats[1..]
        .iter()
        .map(|s| (s.mean() * draws).round() as u64)
        .collect();
    let mut expected = Vec::with_capacity(bins);
    for b in 0..bins {
        let lo = b as f64 * width;
        let hi = lo + width;
        let mass = integrate_1d(|t| ctx.r1(t), lo, hi, &rule)?.value;
        expected.push(draws * mass);
    }
    let chi = chi_square_test(&observed, &expected);
    Ok(((out.stats[0].estimate(), oracle), chi.p_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ExperimentKind, McSettings};

    fn quick_cfg(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_for(kind);
        cfg.mc = McSettings { samples: 400, master_seed: 42, workers: 4 };
        cfg
    }

    #[test]
    fn kernel_checks_pass_and_the_mutated_kernel_fails() {
        let mut cfg = quick_cfg(ExperimentKind::KernelCheck);
        cfg.grid.n = vec![1, 5];
        cfg.grid.a = vec![0.5];
        let rows = kernel_check_rows(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.verdict == "pass"), "{rows:?}");

        let mutated = kernel_check_rows_mutated(&cfg, KernelMutation::FlipR1Sign).unwrap();
        let mass = mutated.iter().find(|r| r.check == "r1-mass").unwrap();
        assert_eq!(mass.verdict, "fail");
    }

    #[test]
    fn moment_rows_mark_infeasible_points_indeterminate() {
        let mut cfg = quick_cfg(ExperimentKind::Moment);
        // N = 20 with s = 0.5 sits far outside the expansion region.
        cfg.grid.n = vec![20];
        cfg.grid.a = vec![20.0 * std::f64::consts::LN_2];
        cfg.grid.kappa = vec![1.5];
        let rows = moment_rows(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].verdict, "indeterminate");
    }

    #[test]
    fn moment_rows_pass_at_a_feasible_point() {
        let mut cfg = quick_cfg(ExperimentKind::Moment);
        cfg.grid.n = vec![20];
        cfg.grid.a = vec![0.05];
        cfg.grid.kappa = vec![1.5];
        cfg.mc.samples = 2000;
        let rows = moment_rows(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].verdict, "pass", "{:?}", rows[0]);
        assert!(rows[0].std_error.is_some());
    }

    #[test]
    fn h_scan_emits_residual_and_slope_rows() {
        let mut cfg = quick_cfg(ExperimentKind::HScan);
        cfg.grid.n = vec![5];
        cfg.grid.a = vec![1e-2, 1e-3, 1e-4, 1e-5];
        let rows = h_scan_rows(&cfg).unwrap();
        let slopes: Vec<_> = rows.iter().filter(|r| r.check == "h1-slope").collect();
        assert_eq!(slopes.len(), 1);
        assert_eq!(slopes[0].verdict, "pass", "{:?}", slopes[0]);
        assert!(rows.iter().filter(|r| r.check == "h2-relative").all(|r| r.verdict == "pass"));
    }

    #[test]
    fn rows_are_deterministic_across_runs() {
        use crate::harness::report::csv_bytes;
        let mut cfg = quick_cfg(ExperimentKind::Moment);
        cfg.grid.n = vec![5];
        cfg.grid.a = vec![0.05];
        cfg.grid.kappa = vec![1.5];
        cfg.mc.samples = 600;
        let a = csv_bytes(&moment_rows(&cfg).unwrap());
        let b = csv_bytes(&moment_rows(&cfg).unwrap());
        assert_eq!(a, b);
    }
}
