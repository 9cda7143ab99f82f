//! Nonlocal Wasserstein distances `W_{eta,theta,m}` on finite discretizations of R^d.
//!
//! The distance between two measures is the least total *nonlocal action* among
//! mass-flux paths that solve the nonlocal (jump) continuity equation. The crate
//! provides:
//!
//! - radial jump kernels `eta`, their rescalings `eta_eps`, moments, and the
//!   derived `zeta` smoothing kernels ([`kernels`]);
//! - concave 1-homogeneous interpolation means `theta` with the connectivity
//!   constant `C_theta` ([`interpolation`]);
//! - finite spaces (grids / point clouds) carrying a reference measure and a
//!   weighted edge set ([`space`]);
//! - the action, nonlocal divergence, continuity-equation residuals, and the
//!   explicit curve constructions used for upper bounds ([`dynamics`]);
//! - a convex splitting solver for the distance itself ([`solver`]);
//! - exact classical transport (W1/W2, Kantorovich potentials, Hopf-Lax) and
//!   the smoothed nonlocal Hamilton-Jacobi dual pipeline ([`reference`]);
//! - certificates instantiating the quantitative inequalities that relate all
//!   of the above, plus the kernel-localization convergence experiment
//!   ([`certify`]).
//!
//! Conventions: radial profiles are supported in `(0, 1]` before rescaling,
//! `eta_eps(r) = eps^{-d} eta(r/eps)`, and the discrete action of a density
//! `rho` and antisymmetric edge flux `j` is
//! `1/2 * sum_{i != j} j(i,j)^2 / theta(rho_i, rho_j) * eta_ij * m_i * m_j`
//! with the convention `0/0 = 0`.

pub mod certify;
pub mod dynamics;
pub mod interpolation;
pub mod kernels;
pub mod quadrature;
pub mod reference;
pub mod solver;
pub mod space;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("divergent integral: {0}")]
    DivergentIntegral(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid interpolation: {0}")]
    InvalidInterpolation(String),
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("mass mismatch: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
