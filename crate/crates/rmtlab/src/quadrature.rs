//! Composite Gauss-Legendre quadrature.
//!
//! Three pieces the rest of the crate relies on:
//!
//! * `integrate_1d`: composite rule over a panel list with automatic
//!   refinement. The error estimate compares the current pass against the
//!   previous one; refinement doubles the panel count until the relative
//!   change drops below [`REL_TOL`] or the panel cap is hit.
//! * panel layouts. A [`PanelLayout::GradedTowardLo`] layout places
//!   geometrically growing panels starting at the pole width, so integrands
//!   like 1/((1-s)^2 + 4 s sin^2(t/2)) with 1-s down to 1e-8 cost tens of
//!   panels instead of millions. Panel growth is capped so that oscillatory
//!   factors (frequency up to a few hundred) stay resolved.
//! * `integrate_nd` for d = 2, 3: tensor products of 1d rules with the same
//!   per-axis convergence contract and a hard evaluation budget. The 3d inner
//!   loops run on threads, but every partial is accumulated into a slot
//!   indexed by the outer node and reduced in slot order, so the result is
//!   bit-identical no matter how many threads ran.
//!
//! All accumulation is compensated (see [`crate::summation`]); results do not
//! depend on chunking.

use crate::summation::CompensatedSum;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

/// Relative convergence tolerance for the refinement loop.
pub const REL_TOL: f64 = 1e-11;
/// Absolute convergence floor, for integrals whose true value is zero.
pub const ABS_FLOOR: f64 = 1e-13;
/// Panel cap for one 1d pass; refinement past this is a convergence failure.
pub const PANEL_CAP_1D: usize = 1 << 14;
/// Total evaluation budget for one `integrate_nd` call.
pub const EVAL_BUDGET_ND: u64 = 1_000_000_000;

/// Growth ratio for graded panels. With order >= 16 the per-panel error for a
/// pole at the graded end stays below 1e-15 at this ratio.
const GRADED_GROWTH: f64 = 3.0;

#[derive(Debug, thiserror::Error)]
pub enum QuadratureError {
    #[error("unsupported Gauss-Legendre order {order} (supported: 8, 16, 32)")]
    UnsupportedOrder { order: usize },
    #[error("invalid integration domain [{lo}, {hi}]")]
    InvalidDomain { lo: f64, hi: f64 },
    #[error("no convergence at {panels} panels (value {value:.6e}, estimate {estimate:.3e})")]
    NonConvergence { panels: usize, value: f64, estimate: f64 },
    #[error("evaluation budget exceeded ({evaluations} > {budget})")]
    BudgetExceeded { evaluations: u64, budget: u64 },
}

/// How a 1d axis is cut into panels before Gauss-Legendre is applied.
#[derive(Clone, Copy, Debug)]
pub enum PanelLayout {
    /// Equal-width panels.
    Uniform,
    /// Panels grow geometrically away from the lower endpoint, starting at
    /// `pole_width` and capped at `max_panel`. For integrands with a
    /// Lorentzian-type peak of that width at the lower endpoint.
    GradedTowardLo { pole_width: f64, max_panel: f64 },
}

/// A 1d quadrature prescription: Gauss-Legendre order, base panel count
/// (sub-panels per layout cell), and panel layout.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureRule {
    pub order: usize,
    pub panels: usize,
    pub layout: PanelLayout,
}

impl QuadratureRule {
    fn checked(order: usize, panels: usize, layout: PanelLayout) -> Result<Self, QuadratureError> {
        if !matches!(order, 8 | 16 | 32) {
            return Err(QuadratureError::UnsupportedOrder { order });
        }
        Ok(Self { order, panels: panels.max(1), layout })
    }

    pub fn uniform(order: usize, panels: usize) -> Result<Self, QuadratureError> {
        Self::checked(order, panels, PanelLayout::Uniform)
    }

    /// Uniform rule sized for an integrand oscillating with the given angular
    /// frequency: max(64, ceil(8 * frequency)) panels.
    pub fn oscillatory(order: usize, frequency: f64) -> Result<Self, QuadratureError> {
        let panels = 64usize.max((8.0 * frequency.max(0.0)).ceil() as usize);
        Self::checked(order, panels, PanelLayout::Uniform)
    }

    /// Graded rule for a pole of the given width at the lower endpoint, with
    /// panel growth capped so oscillation at `frequency` stays resolved.
    pub fn pole_graded(
        order: usize,
        pole_width: f64,
        frequency: f64,
    ) -> Result<Self, QuadratureError> {
        let max_panel = if frequency > 0.0 { (3.0 / frequency).min(0.5) } else { 0.5 };
        Self::checked(
            order,
            2,
            PanelLayout::GradedTowardLo { pole_width: pole_width.abs(), max_panel },
        )
    }

    /// Panel edges for this rule at a given refinement factor.
    fn edges(&self, lo: f64, hi: f64, refine: usize) -> Vec<f64> {
        let span = hi - lo;
        let sub = self.panels * refine;
        match self.layout {
            PanelLayout::Uniform => {
                let n = sub;
                let mut edges = Vec::with_capacity(n + 1);
                for k in 0..=n {
                    edges.push(lo + span * (k as f64) / (n as f64));
                }
                edges
            }
            PanelLayout::GradedTowardLo { pole_width, max_panel } => {
                // Geometric cells from the pole, each split into `sub` panels.
                let mut cell_edges = vec![lo];
                let mut width = pole_width.max(span * 1e-13).min(span);
                let mut x = lo;
                while x + width < hi - 1e-12 * span {
                    x += width;
                    cell_edges.push(x);
                    width = (width * GRADED_GROWTH).min(max_panel);
                }
                cell_edges.push(hi);
                let mut edges = Vec::with_capacity(cell_edges.len() * sub);
                edges.push(lo);
                for w in cell_edges.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    for k in 1..=sub {
                        edges.push(a + (b - a) * (k as f64) / (sub as f64));
                    }
                }
                edges
            }
        }
    }
}

/// Result of a converged integration.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub value: f64,
    /// Difference between the last two refinement passes.
    pub error_estimate: f64,
    pub evaluations: u64,
    /// Error estimates of every refinement step, coarsest first.
    pub history: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed once per order by
/// Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(order: usize) -> Result<(&'static [f64], &'static [f64]), QuadratureError> {
    static TABLES: OnceLock<[(Vec<f64>, Vec<f64>); 3]> = OnceLock::new();
    let tables = TABLES.get_or_init(|| [nodes_weights(8), nodes_weights(16), nodes_weights(32)]);
    let idx = match order {
        8 => 0,
        16 => 1,
        32 => 2,
        _ => return Err(QuadratureError::UnsupportedOrder { order }),
    };
    Ok((&tables[idx].0, &tables[idx].1))
}

fn nodes_weights(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence: p_k(x), derivative from the standard identity.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// One composite pass over a fixed panel list. Panels are accumulated in
/// order with compensation, so the value is chunking-independent.
fn composite_pass(
    f: &impl Fn(f64) -> f64,
    edges: &[f64],
    nodes: &[f64],
    weights: &[f64],
) -> (f64, u64) {
    let mut acc = CompensatedSum::new();
    let mut evals = 0u64;
    for w in edges.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        let mid = 0.5 * (w[1] + w[0]);
        let mut panel = 0.0;
        for (x, wt) in nodes.iter().zip(weights) {
            panel += wt * f(mid + half * x);
        }
        evals += nodes.len() as u64;
        acc.add(panel * half);
    }
    (acc.value(), evals)
}

/// Integrates f over [lo, hi] with automatic panel refinement.
pub fn integrate_1d(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    rule: &QuadratureRule,
) -> Result<Outcome, QuadratureError> {
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(QuadratureError::InvalidDomain { lo, hi });
    }
    let (nodes, weights) = gauss_legendre(rule.order)?;

    let mut refine = 1usize;
    let mut evals = 0u64;
    let mut history = Vec::new();
    let edges = rule.edges(lo, hi, refine);
    let (mut prev, e) = composite_pass(&f, &edges, nodes, weights);
    evals += e;

    loop {
        refine *= 2;
        let edges = rule.edges(lo, hi, refine);
        let panels = edges.len() - 1;
        if panels > PANEL_CAP_1D {
            return Err(QuadratureError::NonConvergence {
                panels: panels / 2,
                value: prev,
                estimate: history.last().copied().unwrap_or(f64::INFINITY),
            });
        }
        let (cur, e) = composite_pass(&f, &edges, nodes, weights);
        evals += e;
        let estimate = (cur - prev).abs();
        history.push(estimate);
        if estimate <= REL_TOL * cur.abs() + ABS_FLOOR && cur.is_finite() {
            return Ok(Outcome { value: cur, error_estimate: estimate, evaluations: evals, history });
        }
        prev = cur;
    }
}

/// Per-axis sampling grid for the tensor product: flattened (point, weight)
/// pairs over all panels of the axis.
type AxisGrid = (Vec<f64>, Vec<f64>);

fn axis_grid(
    rule: &QuadratureRule,
    lo: f64,
    hi: f64,
    refine: usize,
) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    let (nodes, weights) = gauss_legendre(rule.order)?;
    let edges = rule.edges(lo, hi, refine);
    let mut xs = Vec::with_capacity((edges.len() - 1) * nodes.len());
    let mut ws = Vec::with_capacity(xs.capacity());
    for w in edges.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        let mid = 0.5 * (w[1] + w[0]);
        for (x, wt) in nodes.iter().zip(weights) {
            xs.push(mid + half * x);
            ws.push(wt * half);
        }
    }
    Ok((xs, ws))
}

fn tensor_pass(
    f: &(impl Fn(&[f64]) -> f64 + Sync),
    grids: &[(Vec<f64>, Vec<f64>)],
) -> f64 {
    match grids.len() {
        2 => {
            let (xs0, ws0) = &grids[0];
            let (xs1, ws1) = &grids[1];
            let mut outer = CompensatedSum::new();
            for (x0, w0) in xs0.iter().zip(ws0) {
                let mut inner = CompensatedSum::new();
                for (x1, w1) in xs1.iter().zip(ws1) {
                    inner.add(w1 * f(&[*x0, *x1]));
                }
                outer.add(w0 * inner.value());
            }
            outer.value()
        }
        3 => {
            let (xs0, ws0) = &grids[0];
            let (xs1, ws1) = &grids[1];
            let (xs2, ws2) = &grids[2];
            // Slot per outer node; threads fill slots, reduction is ordered,
            // so the value is independent of the thread count.
            let m0 = xs0.len();
            let mut slots = vec![0.0f64; m0];
            let next = AtomicUsize::new(0);
            let threads = std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1).min(16);
            std::thread::scope(|scope| {
                let slots_ptr = SendPtr(slots.as_mut_ptr());
                for _ in 0..threads {
                    let next = &next;
                    scope.spawn(move || loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= m0 {
                            break;
                        }
                        let x0 = xs0[i];
                        let mut mid = CompensatedSum::new();
                        for (x1, w1) in xs1.iter().zip(ws1) {
                            let mut inner = CompensatedSum::new();
                            for (x2, w2) in xs2.iter().zip(ws2) {
                                inner.add(w2 * f(&[x0, *x1, *x2]));
                            }
                            mid.add(w1 * inner.value());
                        }
                        // Safety: slot i is written by exactly one worker.
                        unsafe { slots_ptr.write(i, mid.value()) };
                    });
                }
            });
            let mut outer = CompensatedSum::new();
            for (w0, s) in ws0.iter().zip(&slots) {
                outer.add(w0 * s);
            }
            outer.value()
        }
        _ => unreachable!("tensor_pass is called for d = 2, 3 only"),
    }
}

#[derive(Clone, Copy)]
struct SendPtr(*mut f64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

impl SendPtr {
    /// Safety: caller guarantees slot i is in bounds and written by one thread.
    unsafe fn write(self, i: usize, v: f64) {
        *self.0.add(i) = v;
    }
}

/// Tensor-product integration over a hyper-rectangle, d = 1, 2 or 3.
///
/// Convergence follows the 1d contract per axis: an axis is converged when
/// doubling its panel count moves the value by at most REL_TOL relative.
/// The total evaluation count is capped by [`EVAL_BUDGET_ND`].
pub fn integrate_nd(
    f: impl Fn(&[f64]) -> f64 + Sync,
    domain: &[(f64, f64)],
    rules: &[QuadratureRule],
) -> Result<Outcome, QuadratureError> {
    assert_eq!(domain.len(), rules.len(), "one rule per axis");
    let d = domain.len();
    for &(lo, hi) in domain {
        if lo >= hi || !lo.is_finite() || !hi.is_finite() {
            return Err(QuadratureError::InvalidDomain { lo, hi });
        }
    }
    if d == 1 {
        return integrate_1d(|x| f(&[x]), domain[0].0, domain[0].1, &rules[0]);
    }
    assert!(d == 2 || d == 3, "supported dimensions: 1, 2, 3");

    let mut refines = vec![1usize; d];
    let mut evals = 0u64;
    let mut history = Vec::new();

    let grids = |refines: &[usize]| -> Result<Vec<AxisGrid>, QuadratureError> {
        (0..d)
            .map(|k| axis_grid(&rules[k], domain[k].0, domain[k].1, refines[k]))
            .collect()
    };
    let pass_cost = |g: &[AxisGrid]| -> u64 {
        g.iter().map(|(xs, _)| xs.len() as u64).product()
    };

    let mut base_grids = grids(&refines)?;
    let cost = pass_cost(&base_grids);
    evals += cost;
    if evals > EVAL_BUDGET_ND {
        return Err(QuadratureError::BudgetExceeded { evaluations: evals, budget: EVAL_BUDGET_ND });
    }
    let mut base_value = tensor_pass(&f, &base_grids);

    // Rounds of per-axis probing: double one axis at a time, compare.
    for _round in 0..8 {
        let mut worst = 0.0f64;
        let mut failing: Vec<usize> = Vec::new();
        let mut probe_value = base_value;
        for axis in 0..d {
            let mut r = refines.clone();
            r[axis] *= 2;
            let g = grids(&r)?;
            let cost = pass_cost(&g);
            evals += cost;
            if evals > EVAL_BUDGET_ND {
                return Err(QuadratureError::BudgetExceeded {
                    evaluations: evals,
                    budget: EVAL_BUDGET_ND,
                });
            }
            let v = tensor_pass(&f, &g);
            let diff = (v - base_value).abs();
            worst = worst.max(diff);
            if diff > REL_TOL * v.abs() + ABS_FLOOR {
                failing.push(axis);
            }
            probe_value = v;
        }
        history.push(worst);
        if failing.is_empty() && base_value.is_finite() {
            return Ok(Outcome {
                value: probe_value,
                error_estimate: worst,
                evaluations: evals,
                history,
            });
        }
        for axis in failing {
            refines[axis] *= 2;
        }
        base_grids = grids(&refines)?;
        let cost = pass_cost(&base_grids);
        evals += cost;
        if evals > EVAL_BUDGET_ND {
            return Err(QuadratureError::BudgetExceeded { evaluations: evals, budget: EVAL_BUDGET_ND });
        }
        base_value = tensor_pass(&f, &base_grids);
    }
    Err(QuadratureError::NonConvergence {
        panels: refines.iter().product(),
        value: base_value,
        estimate: history.last().copied().unwrap_or(f64::INFINITY),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    #[allow(clippy::excessive_precision)] // tabulated abscissas
    fn weights_sum_to_two_and_nodes_match_table() {
        for &order in &[8usize, 16, 32] {
            let (nodes, weights) = gauss_legendre(order).unwrap();
            let sum: f64 = weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-14);
            for i in 0..order {
                assert!((nodes[i] + nodes[order - 1 - i]).abs() < 1e-14);
            }
        }
        // Order-8 positive abscissas, Abramowitz & Stegun 25.4.30.
        let (nodes, weights) = gauss_legendre(8).unwrap();
        let expect = [0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363];
        let expect_w = [0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763];
        for (k, (&x, &w)) in expect.iter().zip(&expect_w).enumerate() {
            assert!((nodes[4 + k] - x).abs() < 1e-14);
            assert!((weights[4 + k] - w).abs() < 1e-14);
        }
    }

    #[test]
    fn single_panel_is_exact_on_polynomials() {
        for &order in &[8usize, 16, 32] {
            let (nodes, weights) = gauss_legendre(order).unwrap();
            for degree in 0..(2 * order) {
                let exact = if degree % 2 == 0 { 2.0 / (degree as f64 + 1.0) } else { 0.0 };
                let got: f64 = nodes
                    .iter()
                    .zip(weights)
                    .map(|(x, w)| w * x.powi(degree as i32))
                    .sum();
                assert!(
                    (got - exact).abs() < 2e-14,
                    "order {order}, degree {degree}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn smooth_oracle_integral() {
        let rule = QuadratureRule::uniform(16, 4).unwrap();
        let out = integrate_1d(|t| (0.5 * t).sin().powi(2), 0.0, PI, &rule).unwrap();
        assert!((out.value - PI / 2.0).abs() < 1e-12 * (PI / 2.0));
    }

    #[test]
    fn lorentzian_peak_with_graded_panels() {
        // integral_0^pi dt / ((1-s)^2 + 4 s sin^2(t/2)) = pi / (1 - s^2)
        for &one_minus_s in &[0.1, 0.01, 1e-4, 1e-6] {
            let s: f64 = 1.0 - one_minus_s;
            let rule = QuadratureRule::pole_graded(16, one_minus_s, 1.0).unwrap();
            let out = integrate_1d(
                |t| 1.0 / (one_minus_s * one_minus_s + 4.0 * s * (0.5 * t).sin().powi(2)),
                0.0,
                PI,
                &rule,
            )
            .unwrap();
            let exact = PI / (one_minus_s * (2.0 - one_minus_s));
            assert!(
                (out.value - exact).abs() < 1e-9 * exact,
                "1-s = {one_minus_s}: rel err {}",
                (out.value - exact).abs() / exact
            );
        }
    }

    #[test]
    fn oscillatory_rule_handles_high_frequency() {
        let rule = QuadratureRule::oscillatory(16, 100.0).unwrap();
        let out = integrate_1d(|t| (100.0 * t).cos(), 0.0, PI, &rule).unwrap();
        assert!(out.value.abs() < 1e-10);
        let out = integrate_1d(|t| (50.0 * t).sin().powi(2), 0.0, PI, &rule).unwrap();
        assert!((out.value - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn error_estimates_shrink_under_refinement() {
        let s: f64 = 0.9;
        let w = 1.0 - s;
        let rule = QuadratureRule::uniform(8, 4).unwrap();
        let out = integrate_1d(
            |t| 1.0 / (w * w + 4.0 * s * (0.5 * t).sin().powi(2)),
            0.0,
            PI,
            &rule,
        )
        .unwrap();
        assert!(out.history.len() >= 2, "expected at least two refinements");
        for pair in out.history.windows(2) {
            assert!(
                pair[1] <= pair[0] * 1.2 + ABS_FLOOR,
                "estimates not shrinking: {:?}",
                out.history
            );
        }
    }

    #[test]
    fn nonconvergence_on_endpoint_singularity() {
        let rule = QuadratureRule::uniform(8, 64).unwrap();
        let res = integrate_1d(|t| t.powf(-0.5), 0.0, PI, &rule);
        assert!(matches!(res, Err(QuadratureError::NonConvergence { .. })));
    }

    #[test]
    fn separable_2d_product() {
        let rule = QuadratureRule::uniform(16, 8).unwrap();
        let out = integrate_nd(
            |x| (0.5 * x[0]).sin().powi(2) * (0.5 * x[1]).sin().powi(2),
            &[(0.0, PI), (0.0, PI)],
            &[rule, rule],
        )
        .unwrap();
        let exact = (PI / 2.0) * (PI / 2.0);
        assert!((out.value - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn separable_3d_product() {
        let rule = QuadratureRule::uniform(8, 4).unwrap();
        let out = integrate_nd(
            |x| x.iter().map(|t| (0.5 * t).sin().powi(2)).product(),
            &[(0.0, PI), (0.0, PI), (0.0, PI)],
            &[rule, rule, rule],
        )
        .unwrap();
        let exact = (PI / 2.0f64).powi(3);
        assert!((out.value - exact).abs() < 1e-11 * exact);
    }

    #[test]
    fn nd_budget_is_enforced() {
        let rule = QuadratureRule::uniform(32, 512).unwrap();
        let res = integrate_nd(
            |x| x.iter().sum::<f64>(),
            &[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)],
            &[rule, rule, rule],
        );
        assert!(matches!(res, Err(QuadratureError::BudgetExceeded { .. })));
    }

    #[test]
    fn unsupported_order_is_rejected() {
        assert!(matches!(
            QuadratureRule::uniform(10, 4),
            Err(QuadratureError::UnsupportedOrder { order: 10 })
        ));
    }

    #[test]
    fn invalid_domain_is_rejected() {
        let rule = QuadratureRule::uniform(8, 4).unwrap();
        assert!(matches!(
            integrate_1d(|t| t, 1.0, 0.0, &rule),
            Err(QuadratureError::InvalidDomain { .. })
        ));
    }
}
