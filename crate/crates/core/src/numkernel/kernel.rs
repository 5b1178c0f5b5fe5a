use super::{numerical_rank, thin_svd, Mat};
use crate::error::{Error, Result};

/// Rank threshold relative to the largest singular value.
pub(crate) const RANK_TOL: f64 = 1e-10;

pub(crate) fn ensure_full_row_rank(g: &Mat) -> Result<()> {
    if g.nrows() == 0 {
        return Ok(());
    }
    if g.nrows() > g.ncols() {
        return Err(Error::RankDeficient {
            rank: g.ncols(),
            rows: g.nrows(),
        });
    }
    let svd = thin_svd(g)?;
    let rank = numerical_rank(&svd.s, RANK_TOL);
    if rank < g.nrows() {
        return Err(Error::RankDeficient {
            rank,
            rows: g.nrows(),
        });
    }
    Ok(())
}

/// Orthonormal basis of `ker G` from a Householder QR of `Gᵀ`: the trailing
/// `cols − rows` columns of the full orthogonal factor.
pub fn kernel_basis(g: &Mat) -> Result<Mat> {
    let (rows, n) = g.shape();
    if rows == 0 {
        return Ok(Mat::identity(n, n));
    }
    ensure_full_row_rank(g)?;

    // Householder vectors of Gᵀ (n × rows), column by column.
    let mut a = g.transpose();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(rows);
    for k in 0..rows {
        let x: Vec<f64> = (k..n).map(|i| a[(i, k)]).collect();
        let alpha = -x[0].signum() * x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = x;
        v[0] -= alpha;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if vnorm > 0.0 {
            v.iter_mut().for_each(|t| *t /= vnorm);
        }
        for j in k..rows {
            let dot: f64 = (k..n).map(|i| v[i - k] * a[(i, j)]).sum();
            for i in k..n {
                a[(i, j)] -= 2.0 * v[i - k] * dot;
            }
        }
        reflectors.push(v);
    }

    // Q e_j for j = rows..n, applying H_{rows-1} first.
    let mut basis = Mat::zeros(n, n - rows);
    for (col, j) in (rows..n).enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        for (k, v) in reflectors.iter().enumerate().rev() {
            let dot: f64 = (k..n).map(|i| v[i - k] * e[i]).sum();
            for i in k..n {
                e[i] -= 2.0 * v[i - k] * dot;
            }
        }
        basis.column_mut(col).copy_from_slice(&e);
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_difference_row() {
        let g = Mat::from_row_slice(1, 2, &[1.0, -1.0]);
        let n = kernel_basis(&g).unwrap();
        assert_eq!(n.shape(), (2, 1));
        let expected = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n[(0, 0)].abs() - expected).abs() < 1e-15);
        assert!((n[(0, 0)] - n[(1, 0)]).abs() < 1e-15);
    }

    #[test]
    fn no_constraints_gives_identity() {
        let n = kernel_basis(&Mat::zeros(0, 4)).unwrap();
        assert_eq!(n, Mat::identity(4, 4));
    }

    #[test]
    fn rank_deficient_rejected() {
        let g = Mat::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 2.0, 0.0, -2.0]);
        assert!(matches!(
            kernel_basis(&g),
            Err(Error::RankDeficient { rank: 1, rows: 2 })
        ));
    }
}
