//! Numerical laboratory for the eigenangle statistics of Haar-random matrices
//! from SO(2N+1), the odd special orthogonal group.
//!
//! The library has three layers:
//!
//! * sampling and exact densities: [`ensemble`] draws Haar matrices by QR of
//!   Gaussian matrices and eigenangle vectors by Metropolis MCMC from the
//!   joint eigenangle density; [`kernels`] evaluates the determinantal
//!   correlation functions R_n of the eigenangle process together with a set
//!   of closed-form integrals used as oracles.
//! * deterministic integration and statistics: [`quadrature`] is composite
//!   Gauss-Legendre with pole-graded panels, [`stats`] holds streaming moment
//!   accumulators and the goodness-of-fit tests used by the verification
//!   suite.
//! * moment machinery and verification: [`moments`] computes moments of the
//!   logarithmic derivative of the characteristic polynomial (Monte Carlo and
//!   exact quadrature routes), [`asymptotics`] evaluates the closed asymptotic
//!   formulas those moments converge to, and [`harness`] wires everything into
//!   reproducible experiments behind the `rmtlab` command line tool.
//!
//! Everything downstream of a seed is deterministic: fixed
//! `(config, master_seed, workers)` reproduces every result byte for byte.

pub mod asymptotics;
pub mod ensemble;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod moments;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod summation;
