use serde::{Deserialize, Serialize};

use super::OutputTerms;
use crate::error::Result;
use crate::numkernel::{numerical_rank, thin_svd, Mat};
use crate::podspace::CompressedData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFit {
    #[serde(skip)]
    pub cp: Mat,
    #[serde(skip)]
    pub cv: Mat,
    /// `‖Cp Xr + Cv Ẋr − Y‖_F`.
    pub residual: f64,
    pub rank: usize,
    pub unknowns_per_output: usize,
    /// Fewer independent regressors than unknowns; the minimum-norm solution was taken.
    pub rank_deficient: bool,
}

/// Least-squares fit of `Y ≈ Cp Xr + Cv Ẋr` through the SVD pseudo-inverse
/// (minimum-norm when the regressors are rank-deficient).
pub fn infer_output(data: &CompressedData, terms: OutputTerms) -> Result<OutputFit> {
    data.validate()?;
    let (r, k) = data.xr.shape();
    let p = data.y.nrows();
    let z = match terms {
        OutputTerms::Both => {
            let mut z = Mat::zeros(2 * r, k);
            z.rows_mut(0, r).copy_from(&data.xr);
            z.rows_mut(r, r).copy_from(&data.xdr);
            z
        }
        OutputTerms::Position => data.xr.clone(),
        OutputTerms::Velocity => data.xdr.clone(),
    };
    let nz = z.nrows();
    let (c, rank) = if nz == 0 || k == 0 || z.norm() == 0.0 {
        (Mat::zeros(p, nz), 0)
    } else {
        let svd = thin_svd(&z)?;
        let rank = numerical_rank(&svd.s, nz.max(k) as f64 * f64::EPSILON);
        let mut pinv_t = Mat::zeros(nz, k);
        for i in 0..rank {
            pinv_t += (svd.u.column(i) * svd.w.column(i).transpose()) / svd.s[i];
        }
        // C = Y Z⁺ = Y (Σ w_i u_iᵀ / s_i)
        (&data.y * pinv_t.transpose(), rank)
    };
    let residual = (&c * &z - &data.y).norm();
    let rank_deficient = rank < nz;
    if rank_deficient {
        log::warn!("output regression is rank-deficient (rank {rank} of {nz} regressors, {k} snapshots); using the minimum-norm solution");
    }
    let (cp, cv) = match terms {
        OutputTerms::Both => (c.columns(0, r).into_owned(), c.columns(r, r).into_owned()),
        OutputTerms::Position => (c, Mat::zeros(p, r)),
        OutputTerms::Velocity => (Mat::zeros(p, r), c),
    };
    Ok(OutputFit {
        cp,
        cv,
        residual,
        rank,
        unknowns_per_output: nz,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(xr: Mat, xdr: Mat, y: Mat) -> CompressedData {
        let k = xr.ncols();
        let r = xr.nrows();
        CompressedData {
            xr,
            xdr,
            xddr: Mat::zeros(r, k),
            u: Mat::zeros(1, k),
            y,
        }
    }

    fn signals(r: usize, k: usize) -> (Mat, Mat) {
        let x = Mat::from_fn(r, k, |i, j| ((i + 1) as f64 * 0.37 * j as f64).sin());
        let xd = Mat::from_fn(r, k, |i, j| ((i + 2) as f64 * 0.21 * j as f64 + 0.3).cos());
        (x, xd)
    }

    #[test]
    fn recovers_position_output() {
        let (x, xd) = signals(3, 40);
        let c0 = Mat::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let fit = infer_output(&data(x.clone(), xd, &c0 * &x), OutputTerms::Both).unwrap();
        assert!((&fit.cp - &c0).norm() < 1e-8);
        assert!(fit.cv.norm() < 1e-8);
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn zero_output_gives_zero_operators() {
        let (x, xd) = signals(3, 20);
        let fit = infer_output(&data(x, xd, Mat::zeros(2, 20)), OutputTerms::Both).unwrap();
        assert_eq!(fit.cp, Mat::zeros(2, 3));
        assert_eq!(fit.cv, Mat::zeros(2, 3));
    }

    #[test]
    fn underdetermined_is_flagged() {
        let (x, xd) = signals(4, 3);
        let y = Mat::from_fn(1, 3, |_, j| j as f64);
        let fit = infer_output(&data(x, xd, y), OutputTerms::Both).unwrap();
        assert!(fit.rank_deficient);
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn single_term_fits_leave_other_block_zero() {
        let (x, xd) = signals(2, 30);
        let c0 = Mat::from_row_slice(1, 2, &[2.0, -1.0]);
        let fit = infer_output(&data(x, xd.clone(), &c0 * &xd), OutputTerms::Velocity).unwrap();
        assert!((&fit.cv - &c0).norm() < 1e-10);
        assert_eq!(fit.cp, Mat::zeros(1, 2));
    }
}
