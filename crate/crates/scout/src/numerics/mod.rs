//! Self-contained numeric foundations used by every other module: special
//! functions, small dense symmetric linear algebra, and the seeded RNG
//! contract.

mod linalg;
mod rng;
mod special;

pub use linalg::{dot, eigenvalues_symmetric, min_eigenvalue, norm2, solve_spd, Cholesky, SymMatrix};
pub use rng::RngStream;
pub use special::{
    adaptive_simpson, ln_beta, ln_gamma, log1p_exp, logistic, reg_inc_beta, unit_ball_volume,
};

/// Errors from the numeric kernels.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NumericsError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
}
