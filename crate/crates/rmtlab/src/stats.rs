//! Streaming moment accumulation and the hypothesis tests used by the
//! verification suite.
//!
//! `RunningMoments` is a numerically stable single-pass accumulator that can
//! be merged across workers in a fixed order, so parallel Monte Carlo runs
//! reproduce bit-identical summaries for a given seed and worker count.
//! The test helpers are deliberately small: a regularized incomplete gamma
//! (enough for chi-square p-values), the asymptotic two-sample
//! Kolmogorov-Smirnov statistic, and a least-squares slope on log-log data
//! for measuring convergence rates.

use std::f64::consts::PI;

/// Single-pass mean and variance (Welford update, Chan merge).
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Combines two accumulators as if their inputs had been concatenated.
    pub fn merge(&mut self, other: &RunningMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let delta = other.mean - self.mean;
        let total = n1 + n2;
        self.mean += delta * n2 / total;
        self.m2 += other.m2 + delta * delta * n1 * n2 / total;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero until two values arrive.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> MomentEstimate {
        MomentEstimate { mean: self.mean(), std_error: self.std_error(), count: self.count }
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: u64,
}

/// ln Gamma(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    #[allow(clippy::excessive_precision)] // tabulated Lanczos coefficients
    const COEFFS: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    assert!(x > 0.0, "ln_gamma requires a positive argument");
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the standard continued fraction.
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x + a * x.ln() - ln_gamma(a)).exp()
}

pub fn chi_square_cdf(x: f64, dof: usize) -> f64 {
    gamma_p(dof as f64 / 2.0, x / 2.0)
}

#[derive(Clone, Copy, Debug)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square against known expected counts (no fitted parameters,
/// so dof = bins - 1).
pub fn chi_square_test(observed: &[u64], expected: &[f64]) -> ChiSquareOutcome {
    assert_eq!(observed.len(), expected.len());
    assert!(observed.len() >= 2);
    let mut stat = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        assert!(e > 0.0, "expected count must be positive");
        let d = o as f64 - e;
        stat += d * d / e;
    }
    let dof = observed.len() - 1;
    ChiSquareOutcome { statistic: stat, dof, p_value: gamma_q(dof as f64 / 2.0, stat / 2.0) }
}

#[derive(Clone, Copy, Debug)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// Q(lambda) = 2 sum_k (-1)^{k-1} exp(-2 k^2 lambda^2).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsOutcome {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs: Vec<f64> = a.to_vec();
    let mut ys: Vec<f64> = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let (x, y) = (xs[i], ys[j]);
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsOutcome { statistic: d, p_value: ks_survival(lambda) }
}

fn ks_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual of the fit in log space.
    pub max_residual: f64,
}

/// Least-squares line through (ln x, ln y); measures convergence orders.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> SlopeFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            assert!(x > 0.0 && y > 0.0, "log-log fit needs positive data");
            (x.ln(), y.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    assert!(denom.abs() > 0.0, "degenerate abscissas");
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let max_residual = pts
        .iter()
        .map(|&(lx, ly)| (ly - slope * lx - intercept).abs())
        .fold(0.0, f64::max);
    SlopeFit { slope, intercept, max_residual }
}
