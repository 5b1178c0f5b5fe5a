//! Dense linear-algebra kernels.
//!
//! Everything here works on [`Mat`] (a column-major `nalgebra::DMatrix<f64>`).
//! Problem sizes are desk scale (a few hundred unknowns), so no sparse storage
//! is used anywhere in the crate.

mod chol;
mod eig;
mod kernel;
mod psd;
mod saddle;
mod svd;

pub use chol::{solve_spd, Cholesky};
pub use eig::{sym_eig, SymEig};
pub use kernel::kernel_basis;
pub use psd::psd_project;
pub use saddle::{solve_saddle, SaddleFactor};
pub use svd::{numerical_rank, thin_svd, Svd};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative symmetry defect accepted by routines that symmetrize their input.
pub const SYMMETRY_TOL: f64 = 1e-8;

pub fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn symmetrize(s: &Mat) -> Mat {
    (s + s.transpose()) * 0.5
}

/// `‖S − Sᵀ‖_F / ‖S‖_F`, zero for the zero matrix.
pub fn symmetry_defect(s: &Mat) -> f64 {
    let norm = s.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (s - s.transpose()).norm() / norm
}

pub(crate) fn ensure_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(Error::dim(
            what,
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ))
    }
}

pub(crate) fn ensure_symmetric(s: &Mat, what: &str) -> Result<()> {
    ensure_square(s, what)?;
    let defect = symmetry_defect(s);
    if defect <= SYMMETRY_TOL {
        Ok(())
    } else {
        Err(Error::Invariant(format!(
            "{what} not symmetric (relative defect {defect:e})"
        )))
    }
}

/// Smallest eigenvalue of the symmetric part of `s`.
pub fn min_eigenvalue(s: &Mat) -> Result<f64> {
    if s.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let eig = sym_eig(s)?;
    Ok(eig.values[0])
}

/// Positive-definiteness test through a Cholesky attempt; cheap for large `n`.
pub fn is_positive_definite(s: &Mat) -> bool {
    Cholesky::factor(&symmetrize(s)).is_ok()
}
