use super::kernel::ensure_full_row_rank;
use super::{kernel_basis, Cholesky, Mat, Vector};
use crate::error::{Error, Result};

/// Prefactored KKT block system
///
/// ```text
/// [ S  Gᵀ ] [ a ]   [ f ]
/// [ G  0  ] [ λ ] = [ g ]
/// ```
///
/// When `S` is positive definite the Schur complement `G S⁻¹ Gᵀ` is used.
/// Otherwise `S` only has to be positive definite on `ker G` and the system is
/// solved in an orthonormal null-space basis.
#[derive(Debug, Clone)]
pub struct SaddleFactor {
    n: usize,
    g: Mat,
    kind: Factored,
}

#[derive(Debug, Clone)]
enum Factored {
    Unconstrained(Cholesky),
    Schur {
        s: Cholesky,
        /// S⁻¹ Gᵀ
        s_inv_gt: Mat,
        schur: Cholesky,
    },
    NullSpace {
        s: Mat,
        basis: Mat,
        reduced: Cholesky,
        ggt: Cholesky,
    },
}

impl SaddleFactor {
    pub fn new(s: &Mat, g: &Mat) -> Result<Self> {
        super::ensure_square(s, "saddle block S")?;
        let n = s.nrows();
        if g.ncols() != n {
            return Err(Error::dim("saddle block G columns", n, g.ncols()));
        }
        if g.nrows() == 0 {
            return Ok(Self {
                n,
                g: g.clone(),
                kind: Factored::Unconstrained(Cholesky::factor(s)?),
            });
        }
        ensure_full_row_rank(g)?;
        let kind = match Cholesky::factor(s) {
            Ok(chol) => {
                let s_inv_gt = chol.solve_mat(&g.transpose());
                let schur = Cholesky::factor(&super::symmetrize(&(g * &s_inv_gt)))
                    .map_err(|_| Error::RankDeficient {
                        rank: 0,
                        rows: g.nrows(),
                    })?;
                Factored::Schur {
                    s: chol,
                    s_inv_gt,
                    schur,
                }
            }
            Err(_) => {
                let basis = kernel_basis(g)?;
                let reduced = Cholesky::factor(&super::symmetrize(&(basis.transpose() * s * &basis)))?;
                let ggt = Cholesky::factor(&(g * g.transpose()))?;
                Factored::NullSpace {
                    s: s.clone(),
                    basis,
                    reduced,
                    ggt,
                }
            }
        };
        Ok(Self {
            n,
            g: g.clone(),
            kind,
        })
    }

    pub fn constraint_rows(&self) -> usize {
        self.g.nrows()
    }

    pub fn solve(&self, f: &Vector, g_rhs: &Vector) -> Result<(Vector, Vector)> {
        if f.len() != self.n {
            return Err(Error::dim("saddle rhs f", self.n, f.len()));
        }
        if g_rhs.len() != self.g.nrows() {
            return Err(Error::dim("saddle rhs g", self.g.nrows(), g_rhs.len()));
        }
        Ok(match &self.kind {
            Factored::Unconstrained(chol) => (chol.solve_vec(f), Vector::zeros(0)),
            Factored::Schur {
                s,
                s_inv_gt,
                schur,
            } => {
                let a0 = s.solve_vec(f);
                let lam = schur.solve_vec(&(&self.g * &a0 - g_rhs));
                let a = a0 - s_inv_gt * &lam;
                (a, lam)
            }
            Factored::NullSpace {
                s,
                basis,
                reduced,
                ggt,
            } => {
                // Minimum-norm particular solution of G a = g, then the
                // reduced problem on ker G.
                let particular = self.g.transpose() * ggt.solve_vec(g_rhs);
                let rhs = basis.transpose() * (f - s * &particular);
                let a = particular + basis * reduced.solve_vec(&rhs);
                let lam = ggt.solve_vec(&(&self.g * (f - s * &a)));
                (a, lam)
            }
        })
    }
}

pub fn solve_saddle(s: &Mat, g: &Mat, f: &Vector, g_rhs: &Vector) -> Result<(Vector, Vector)> {
    SaddleFactor::new(s, g)?.solve(f, g_rhs)
}
