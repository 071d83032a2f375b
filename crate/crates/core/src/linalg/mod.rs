//! Dense real/complex linear algebra kernels used by the modelling and
//! design layers: LU, Householder QR, real Schur with reordering,
//! Jacobi SVD, Sylvester/Lyapunov solvers and the matrix exponential.

use core::fmt;

mod expm;
mod lu;
mod mat;
mod qr;
mod schur;
mod svd;
mod sylvester;

pub use expm::expm;
pub use lu::{cond_1, inverse, solve, Lu};
pub use mat::{CMatrix, Mat, Matrix, Scalar};
pub use qr::householder_qr;
pub use schur::{balance, eigenvalues, quasi_triangular_blocks, real_schur, reorder_schur, RealSchur};
pub use svd::{svd, Svd};
pub use sylvester::{lyapunov, solve_sylvester_quasi_triangular, sylvester};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinalgError {
    NotSquare,
    Singular,
    /// QR iteration did not converge within the iteration budget.
    NoConvergence,
    /// A Sylvester equation whose operand spectra intersect.
    CommonEigenvalue,
    /// A Schur block swap was rejected as numerically unstable.
    SwapRejected,
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::NotSquare => write!(f, "matrix is not square"),
            LinalgError::Singular => write!(f, "matrix is singular to working precision"),
            LinalgError::NoConvergence => write!(f, "eigenvalue iteration did not converge"),
            LinalgError::CommonEigenvalue => {
                write!(f, "sylvester operands share an eigenvalue")
            }
            LinalgError::SwapRejected => write!(f, "schur block swap was numerically unstable"),
        }
    }
}

impl core::error::Error for LinalgError {}
