use super::{ensure_square, sym_eig, symmetrize, Mat};
use crate::error::Result;

/// Frobenius-nearest symmetric positive semidefinite matrix: symmetrize,
/// clip negative eigenvalues to zero, recompose.
pub fn psd_project(s: &Mat) -> Result<Mat> {
    ensure_square(s, "psd_project")?;
    let sym = symmetrize(s);
    let eig = sym_eig(&sym)?;
    if eig.values.iter().all(|&l| l >= 0.0) {
        return Ok(sym);
    }
    Ok(eig.recompose(|l| l.max(0.0)))
}
