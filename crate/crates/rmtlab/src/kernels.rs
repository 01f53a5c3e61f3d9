//! Correlation kernels of the eigenangle point process.
//!
//! For a Haar matrix from SO(2N+1) the N eigenangles on (0, pi] form a
//! determinantal process with kernel
//!
//! ```text
//! K_N(a, b) = S_{2N}(a - b) - S_{2N}(a + b),
//! S_m(t)    = sin(m t / 2) / (2 pi sin(t / 2)),
//! ```
//!
//! and n-point correlation function R_n = det[K_N(t_j, t_k)]. The one- and
//! two-point functions have the familiar closed forms
//! R_1(t) = N/pi - sin(2Nt)/(2 pi sin t) and R_2 = R_1 R_1 - K_N^2.
//!
//! Every kernel ratio switches to a truncated series when its denominator is
//! small, so values at t = 0, t = pi and their neighborhoods are finite and
//! carry no cancellation noise. The module also exposes the closed-form
//! integrals used as oracles by the verification suite:
//!
//! * integral of R_1 over (0, pi) = N,
//! * integral of R_1 / sin^2(t/2) = 2 N^2,
//! * integral of 1/((1-s)^2 + 4 s sin^2(t/2)) = pi / (1 - s^2),
//! * an upper bound for the same integrand to the l-th power weighted by
//!   sin^2(t/2), valid for l >= 2.

use crate::linalg::{Lu, Matrix};
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("correlation order {order} not supported (max 6)")]
    UnsupportedOrder { order: usize },
    #[error("s = {s} outside [0, 1)")]
    InvalidS { s: f64 },
}

/// Evaluation context: the half-dimension N of SO(2N+1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelContext {
    n: usize,
}

impl KernelContext {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "matrix size parameter must be at least 1");
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The determinantal kernel K_N(a, b).
    pub fn kernel(&self, a: f64, b: f64) -> f64 {
        sine_kernel(2 * self.n, a - b) - sine_kernel(2 * self.n, a + b)
    }

    /// j-th orthonormal mode of the kernel's range, j < N. Expanding the
    /// Dirichlet ratios in S_{2N} shows the kernel is the rank-N projection
    ///
    /// ```text
    /// K_N(a, b) = sum_{j < N} mode_j(a) mode_j(b),
    /// mode_j(t) = sqrt(2/pi) sin((j + 1/2) t),
    /// ```
    ///
    /// so operator traces of linear statistics close over this basis as
    /// N x N matrix algebra instead of high-dimensional cubature.
    pub fn projection_mode(&self, j: usize, t: f64) -> f64 {
        assert!(j < self.n, "mode index past the kernel rank");
        (2.0 / PI).sqrt() * ((j as f64 + 0.5) * t).sin()
    }

    /// One-point correlation (eigenangle density, integrating to N).
    pub fn r1(&self, theta: f64) -> f64 {
        let n = self.n as f64;
        let m = 2.0 * n;
        // R_1 = S_{2N}(0) - S_{2N}(2t). Near t = 0 both terms are ~N/pi and
        // the direct difference is cancellation noise, so use the series of
        // the difference itself, whose leading term is the quadratic bound.
        if (m * theta).abs() < 1e-3 {
            let t2 = theta * theta;
            let lead = n * (4.0 * n * n - 1.0) / (6.0 * PI);
            let quartic = (n / PI) * (7.0 / 360.0 - n * n / 9.0 + 2.0 * n.powi(4) / 15.0);
            return t2 * (lead - quartic * t2);
        }
        m / (2.0 * PI) - sine_kernel(2 * self.n, 2.0 * theta)
    }

    /// Two-point correlation.
    pub fn r2(&self, t1: f64, t2: f64) -> f64 {
        let k12 = self.kernel(t1, t2);
        self.r1(t1) * self.r1(t2) - k12 * k12
    }

    /// n-point correlation det[K(t_j, t_k)], n <= 6.
    pub fn rn(&self, angles: &[f64]) -> Result<f64, KernelError> {
        let order = angles.len();
        if order == 0 || order > 6 {
            return Err(KernelError::UnsupportedOrder { order });
        }
        if order == 1 {
            return Ok(self.r1(angles[0]));
        }
        let mut k = Matrix::zeros(order);
        for i in 0..order {
            for j in 0..order {
                let v = if i == j { self.r1(angles[i]) } else { self.kernel(angles[i], angles[j]) };
                k.set(i, j, v);
            }
        }
        match Lu::decompose(&k) {
            Ok(lu) => Ok(lu.det()),
            // An exactly-zero pivot means the kernel matrix is singular,
            // which is the correct value for coincident angles.
            Err(_) => Ok(0.0),
        }
    }

    /// Pointwise bound |R_1(t)| <= N (4N^2 - 1) t^2 / (6 pi).
    pub fn r1_quadratic_bound(&self, theta: f64) -> f64 {
        let n = self.n as f64;
        n * (4.0 * n * n - 1.0) * theta * theta / (6.0 * PI)
    }

    /// Pointwise bound |S_{2N}(x) - N/pi| <= N^2 |x| / (2 pi).
    pub fn sine_kernel_lipschitz_bound(&self, x: f64) -> f64 {
        let n = self.n as f64;
        n * n * x.abs() / (2.0 * PI)
    }

    /// R_1(t) / sin^2(t/2), finite at t = 0 where the limit is
    /// 2N (4N^2 - 1) / (3 pi).
    pub fn r1_over_sin_sq(&self, theta: f64) -> f64 {
        let n = self.n as f64;
        let half_sin = (0.5 * theta).sin();
        if half_sin == 0.0 {
            return 2.0 * n * (4.0 * n * n - 1.0) / (3.0 * PI);
        }
        self.r1(theta) / (half_sin * half_sin)
    }
}

/// The scaled Dirichlet ratio S_m(t) = sin(m t / 2) / (2 pi sin(t / 2)).
///
/// Near t = 2 pi k the ratio is evaluated by series; the limit value is
/// m / (2 pi) at k = 0 and picks up a factor (-1)^k for even m.
pub fn sine_kernel(index: usize, theta: f64) -> f64 {
    debug_assert!(index >= 1);
    let m = index as f64;
    let half_sin = (0.5 * theta).sin();
    if half_sin.abs() >= 1e-8 {
        return (0.5 * m * theta).sin() / (2.0 * PI * half_sin);
    }
    let k = (theta / (2.0 * PI)).round();
    let v = 0.5 * (theta - 2.0 * PI * k);
    let sign = if index.is_multiple_of(2) && (k as i64) % 2 != 0 { -1.0 } else { 1.0 };
    let v2 = v * v;
    let m2 = m * m;
    let series =
        m * (1.0 + (1.0 - m2) * v2 / 6.0 + (7.0 / 360.0 - m2 / 36.0 + m2 * m2 / 120.0) * v2 * v2);
    sign * series / (2.0 * PI)
}

/// Closed form of the Lorentzian-type integral
/// integral_0^pi dt / ((1-s)^2 + 4 s sin^2(t/2)) = pi / (1 - s^2).
pub fn lorentzian_integral(s: f64) -> Result<f64, KernelError> {
    if !(0.0..1.0).contains(&s) {
        return Err(KernelError::InvalidS { s });
    }
    Ok(lorentzian_integral_om(1.0 - s))
}

/// Same value parameterized by 1 - s, for callers that track the distance to
/// the singular point directly (no precision loss as s approaches 1).
pub fn lorentzian_integral_om(one_minus_s: f64) -> f64 {
    PI / (one_minus_s * (2.0 - one_minus_s))
}

/// Closed form of integral_0^pi R_1(t) / sin^2(t/2) dt = 2 N^2.
pub fn r1_over_sin2_integral(ctx: &KernelContext) -> f64 {
    let n = ctx.n() as f64;
    2.0 * n * n
}

/// Upper bound for integral_0^pi sin^2(t/2) / ((1-s)^2 + 4 s sin^2(t/2))^l dt,
/// valid for l >= 2: pi / (2 (1-s)^{2l-3} (1+s)^3).
pub fn lorentzian_power_bound(s: f64, l: u32) -> Result<f64, KernelError> {
    if !(0.0..1.0).contains(&s) {
        return Err(KernelError::InvalidS { s });
    }
    assert!(l >= 2, "bound holds for l >= 2");
    let om = 1.0 - s;
    Ok(PI / (2.0 * om.powi(2 * l as i32 - 3) * (1.0 + s).powi(3)))
}

/// Checks |R_1| against its quadratic bound on a grid; returns the first
/// violation. The bound is a strict inequality analytically; the tolerance
/// covers roundoff in the direct evaluation branch.
pub fn r1_quadratic_bound_check(ctx: &KernelContext, grid: &[f64]) -> Result<(), (f64, f64, f64)> {
    let slack = 1e-13 * ctx.n() as f64;
    for &t in grid {
        let v = ctx.r1(t).abs();
        let b = ctx.r1_quadratic_bound(t);
        if v > b * (1.0 + 1e-9) + slack {
            return Err((t, v, b));
        }
    }
    Ok(())
}

/// Checks the sine-kernel Lipschitz bound on a grid of offsets.
pub fn sine_kernel_lipschitz_check(
    ctx: &KernelContext,
    grid: &[f64],
) -> Result<(), (f64, f64, f64)> {
    let n = ctx.n() as f64;
    let center = n / PI;
    for &x in grid {
        let v = (sine_kernel(2 * ctx.n(), x) - center).abs();
        let b = ctx.sine_kernel_lipschitz_bound(x);
        if v > b * (1.0 + 1e-9) + 1e-13 * n {
            return Err((x, v, b));
        }
    }
    Ok(())
}
