//! Sampling Haar-distributed odd special orthogonal matrices and reading off
//! their eigenangles.
//!
//! A matrix from SO(2N+1) has eigenvalue 1 with a fixed real eigenvector and
//! N conjugate pairs exp(+-i theta_j) with theta_j in (0, pi]. The sampler
//! QR-factors a Gaussian matrix, fixes the sign convention of the triangular
//! factor, and flips one column when the determinant lands on the wrong
//! component of O(2N+1); both halves of that procedure preserve the invariant
//! measure. Eigenangles come from the symmetric part (X + X^T)/2, whose
//! spectrum is {1} plus each cos theta_j twice.
//!
//! A small Metropolis sampler for the joint eigenangle density provides an
//! independent route to the same distribution. It never touches the matrix
//! sampler, so agreement between the two is a meaningful check rather than a
//! tautology.

use crate::linalg::{householder_qr, symmetric_eigenvalues, Lu, Matrix};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Two matched symmetric-part eigenvalues may differ by this much before the
/// pairing is declared ambiguous.
const PAIRING_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("orthogonality deviation {deviation:.3e} exceeds {tol:.3e}")]
    NotOrthogonal { deviation: f64, tol: f64 },
    #[error("determinant {det} is not +1")]
    WrongDeterminant { det: f64 },
    #[error("dimension {dim} is not odd and at least 3")]
    BadDimension { dim: usize },
}

/// An element of SO(2N+1), stored dense.
#[derive(Clone, Debug)]
pub struct SpecialOrthogonalMatrix {
    mat: Matrix,
}

impl SpecialOrthogonalMatrix {
    /// Wraps a matrix after checking the group membership invariants.
    pub fn new(mat: Matrix) -> Result<Self, EnsembleError> {
        let m = Self { mat };
        m.validate()?;
        Ok(m)
    }

    /// Wraps without validation; for samplers whose construction guarantees
    /// membership up to roundoff.
    pub fn new_unchecked(mat: Matrix) -> Self {
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    /// N, the number of conjugate eigenvalue pairs.
    pub fn n_pairs(&self) -> usize {
        (self.dim() - 1) / 2
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    /// Checks X X^T = I, det X = +1, and that the dimension is odd.
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let dim = self.dim();
        if dim < 3 || dim.is_multiple_of(2) {
            return Err(EnsembleError::BadDimension { dim });
        }
        let tol = 1e-10 * dim as f64;
        let deviation = self.mat.matmul(&self.mat.transpose()).max_deviation_from_identity();
        if deviation > tol {
            return Err(EnsembleError::NotOrthogonal { deviation, tol });
        }
        let det = match Lu::decompose(&self.mat) {
            Ok(lu) => lu.det(),
            Err(_) => 0.0,
        };
        if (det - 1.0).abs() > 1e-8 * dim as f64 {
            return Err(EnsembleError::WrongDeterminant { det });
        }
        Ok(())
    }
}

/// Draws a Haar-distributed element of SO(2N+1).
///
/// Gaussian matrix -> Householder QR -> columns rescaled so R has positive
/// diagonal (making Q Haar on O(2N+1)) -> last column negated when the
/// determinant is -1. The determinant sign is a counted parity from the QR
/// construction, never a floating-point determinant.
pub fn sample_haar_so(n: usize, rng: &mut impl Rng) -> SpecialOrthogonalMatrix {
    assert!(n >= 1);
    let dim = 2 * n + 1;
    let g = Matrix::from_fn(dim, |_, _| rng.sample(StandardNormal));
    let qr = householder_qr(&g);
    let mut q = qr.q;
    let mut det_sign = qr.q_det_sign;
    for j in 0..dim {
        if qr.r_diag[j] < 0.0 {
            for v in q.col_mut(j) {
                *v = -*v;
            }
            det_sign = -det_sign;
        }
    }
    if det_sign < 0.0 {
        for v in q.col_mut(dim - 1) {
            *v = -*v;
        }
    }
    SpecialOrthogonalMatrix::new_unchecked(q)
}

/// Eigenangles of one matrix, ascending on (0, pi].
#[derive(Clone, Debug)]
pub struct EigenAngles {
    pub angles: Vec<f64>,
    /// Set when the spectrum did not separate cleanly into the fixed
    /// eigenvalue 1 plus N doubled cosines: an angle at machine scale, a
    /// mismatched pair, or a largest eigenvalue away from 1. The angles are
    /// still the best available reading.
    pub degenerate: bool,
}

impl EigenAngles {
    pub fn n_pairs(&self) -> usize {
        self.angles.len()
    }
}

/// Extracts eigenangles from the symmetric part of the matrix.
///
/// The spectrum of (X + X^T)/2 is sorted descending; the top value is the
/// fixed eigenvalue 1, the rest come in equal pairs cos theta_j. Pairs are
/// averaged, clamped into [-1, 1], and mapped through arccos.
pub fn eigenangles_of(x: &SpecialOrthogonalMatrix) -> EigenAngles {
    let sym = x.matrix().symmetric_part();
    let mut ev = symmetric_eigenvalues(&sym);
    ev.reverse();
    let mut degenerate = (ev[0] - 1.0).abs() > PAIRING_TOL;
    let mut angles = Vec::with_capacity(x.n_pairs());
    for pair in ev[1..].chunks(2) {
        if (pair[0] - pair[1]).abs() > PAIRING_TOL {
            degenerate = true;
        }
        let c = (0.5 * (pair[0] + pair[1])).clamp(-1.0, 1.0);
        let theta = c.acos();
        if theta < PAIRING_TOL {
            // Indistinguishable from the fixed eigenvalue.
            degenerate = true;
        }
        angles.push(theta);
    }
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    EigenAngles { angles, degenerate }
}

/// Metropolis sampler for the joint eigenangle density on (0, pi)^N,
/// proportional to prod_{j<k} (cos t_j - cos t_k)^2 prod_j sin^2(t_j / 2).
///
/// Single-coordinate random-walk proposals reflected at the interval ends;
/// the step width adapts toward a 20..50% acceptance rate during burn-in and
/// is frozen afterwards. Draws are separated by max(2N, 24) full sweeps,
/// which keeps the autocorrelation of symmetric statistics negligible even
/// at small N where a bare 2N-sweep gap measurably inflates variance.
pub struct McmcChain {
    angles: Vec<f64>,
    width: f64,
    thinning: usize,
}

impl McmcChain {
    pub fn new(n: usize, rng: &mut impl Rng) -> Self {
        assert!(n >= 1);
        let angles = (0..n).map(|j| PI * (j as f64 + 0.5) / n as f64).collect();
        let mut chain = Self { angles, width: PI / (n as f64).sqrt(), thinning: (2 * n).max(24) };
        chain.burn_in(rng);
        chain
    }

    fn burn_in(&mut self, rng: &mut impl Rng) {
        const ADAPT_ROUNDS: usize = 40;
        const SWEEPS_PER_ROUND: usize = 25;
        for _ in 0..ADAPT_ROUNDS {
            let mut accepted = 0usize;
            let mut proposed = 0usize;
            for _ in 0..SWEEPS_PER_ROUND {
                let (a, p) = self.sweep(rng);
                accepted += a;
                proposed += p;
            }
            let rate = accepted as f64 / proposed as f64;
            if rate < 0.2 {
                self.width *= 0.7;
            } else if rate > 0.5 {
                self.width *= 1.3;
            }
            self.width = self.width.clamp(1e-3, PI);
        }
    }

    fn log_density_terms(&self, m: usize, value: f64) -> f64 {
        let mut acc = 2.0 * (0.5 * value).sin().abs().max(1e-300).ln();
        let cm = value.cos();
        for (j, &t) in self.angles.iter().enumerate() {
            if j != m {
                acc += 2.0 * (cm - t.cos()).abs().max(1e-300).ln();
            }
        }
        acc
    }

    fn sweep(&mut self, rng: &mut impl Rng) -> (usize, usize) {
        let n = self.angles.len();
        let mut accepted = 0;
        for m in 0..n {
            let old = self.angles[m];
            let mut prop = old + self.width * (rng.gen::<f64>() - 0.5) * 2.0;
            // Reflecting at the ends keeps the proposal symmetric.
            if prop < 0.0 {
                prop = -prop;
            }
            if prop > PI {
                prop = 2.0 * PI - prop;
            }
            let delta = self.log_density_terms(m, prop) - self.log_density_terms(m, old);
            if delta >= 0.0 || rng.gen::<f64>() < delta.exp() {
                self.angles[m] = prop;
                accepted += 1;
            }
        }
        (accepted, n)
    }

    /// Advances by the thinning interval and returns a draw.
    pub fn draw(&mut self, rng: &mut impl Rng) -> Vec<f64> {
        for _ in 0..self.thinning {
            self.sweep(rng);
        }
        let mut out = self.angles.clone();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }
}

/// Convenience wrapper: burn in one chain and take `count` thinned draws.
pub fn sample_angles_mcmc(n: usize, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut chain = McmcChain::new(n, rng);
    (0..count).map(|_| chain.draw(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelContext;
    use crate::quadrature::{integrate_1d, QuadratureRule};
    use crate::rng::RngStream;
    use crate::stats::{chi_square_test, ks_two_sample, RunningMoments};

    #[test]
    fn sampled_matrices_are_group_elements() {
        let mut rng = RngStream::new(21, 0).rng();
        for &n in &[1usize, 5, 20] {
            for _ in 0..3 {
                let x = sample_haar_so(n, &mut rng);
                assert_eq!(x.dim(), 2 * n + 1);
                x.validate().unwrap();
            }
        }
    }

    #[test]
    fn sampling_is_reproducible_per_seed() {
        let a = sample_haar_so(4, &mut RngStream::new(7, 3).rng());
        let b = sample_haar_so(4, &mut RngStream::new(7, 3).rng());
        for j in 0..a.dim() {
            assert_eq!(a.matrix().col(j), b.matrix().col(j));
        }
    }

    #[test]
    fn eigenangles_lie_in_range_and_pair_up() {
        let mut rng = RngStream::new(22, 0).rng();
        for _ in 0..20 {
            let x = sample_haar_so(6, &mut rng);
            let ea = eigenangles_of(&x);
            assert_eq!(ea.n_pairs(), 6);
            assert!(!ea.degenerate);
            for w in ea.angles.windows(2) {
                assert!(w[0] <= w[1]);
            }
            for &t in &ea.angles {
                assert!(t > 0.0 && t <= PI);
            }
            // Eigenvalue identity: trace X = 1 + 2 sum cos theta_j.
            let sum_cos: f64 = ea.angles.iter().map(|t| t.cos()).sum();
            assert!((x.trace() - 1.0 - 2.0 * sum_cos).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_matrix_is_flagged_degenerate() {
        let x = SpecialOrthogonalMatrix::new(Matrix::identity(7)).unwrap();
        let ea = eigenangles_of(&x);
        assert!(ea.degenerate);
        for &t in &ea.angles {
            assert!(t.abs() < 1e-6);
        }
    }

    #[test]
    fn validation_rejects_non_members() {
        let mut m = Matrix::identity(5);
        m.set(0, 0, 2.0);
        assert!(SpecialOrthogonalMatrix::new(m).is_err());
        // det = -1 reflection.
        let mut m = Matrix::identity(5);
        m.set(4, 4, -1.0);
        assert!(matches!(
            SpecialOrthogonalMatrix::new(m),
            Err(EnsembleError::WrongDeterminant { .. })
        ));
        assert!(matches!(
            SpecialOrthogonalMatrix::new(Matrix::identity(4)),
            Err(EnsembleError::BadDimension { dim: 4 })
        ));
    }

    #[test]
    fn mean_trace_vanishes() {
        // E[tr X] = 0 over the ensemble: the fixed eigenvalue contributes 1
        // and the angle sum contributes -1.
        let mut rng = RngStream::new(23, 0).rng();
        let mut acc = RunningMoments::new();
        for _ in 0..4000 {
            acc.push(sample_haar_so(5, &mut rng).trace());
        }
        let est = acc.estimate();
        assert!(
            est.mean.abs() <= 4.0 * est.std_error,
            "mean {} vs stderr {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn single_angle_density_matches_one_point_function() {
        // At N = 1 the lone angle has density R_1(t) = (2/pi) sin^2(t/2).
        let mut rng = RngStream::new(24, 0).rng();
        let draws = 4000usize;
        let bins = 20usize;
        let mut observed = vec![0u64; bins];
        for _ in 0..draws {
            let ea = eigenangles_of(&sample_haar_so(1, &mut rng));
            let t = ea.angles[0];
            let b = ((t / PI * bins as f64) as usize).min(bins - 1);
            observed[b] += 1;
        }
        let ctx = KernelContext::new(1);
        let rule = QuadratureRule::uniform(16, 8).unwrap();
        let expected: Vec<f64> = (0..bins)
            .map(|b| {
                let lo = PI * b as f64 / bins as f64;
                let hi = PI * (b + 1) as f64 / bins as f64;
                draws as f64 * integrate_1d(|t| ctx.r1(t), lo, hi, &rule).unwrap().value
            })
            .collect();
        let out = chi_square_test(&observed, &expected);
        assert!(out.p_value > 0.001, "chi-square p = {}", out.p_value);
    }

    #[test]
    fn metropolis_agrees_with_matrix_sampler() {
        let mut rng = RngStream::new(25, 0).rng();
        let n = 2usize;
        let draws = 1500usize;
        let mut qr_angles = Vec::with_capacity(draws * n);
        for _ in 0..draws {
            qr_angles.extend(eigenangles_of(&sample_haar_so(n, &mut rng)).angles);
        }
        let mut mcmc_rng = RngStream::new(25, 1).rng();
        let mcmc_angles: Vec<f64> =
            sample_angles_mcmc(n, draws, &mut mcmc_rng).into_iter().flatten().collect();
        let out = ks_two_sample(&qr_angles, &mcmc_angles);
        assert!(out.p_value > 0.001, "KS p = {}, D = {}", out.p_value, out.statistic);
    }
}
