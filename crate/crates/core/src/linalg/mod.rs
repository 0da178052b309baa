//! Dense and sparse linear algebra used by the density models and solvers.
//!
//! Everything here is small and specialised: dense matrices are at most a
//! few hundred rows (patch covariances are 64x64), sparse matrices are the
//! image-sized precision matrices of the hand-crafted priors.

mod cg;
mod cholesky;
mod dense;
mod sparse;

pub use cg::{conjugate_gradient, CgOutcome};
pub use cholesky::Cholesky;
pub use dense::Matrix;
pub use sparse::CsrMatrix;
