use super::Mat;
use crate::error::{Error, Result};

const MAX_ITERS: usize = 10_000;

/// Thin singular value decomposition `A = U diag(s) Wᵀ` with `s` sorted
/// non-increasing. `U` is `rows × p` and `W` is `cols × p`, `p = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub w: Mat,
}

impl Svd {
    pub fn reconstruct(&self) -> Mat {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.s[j];
        }
        us * self.w.transpose()
    }
}

/// Golub–Kahan bidiagonalization followed by implicit-shift QR (via nalgebra).
pub fn thin_svd(a: &Mat) -> Result<Svd> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidArgument("thin_svd of an empty matrix".into()));
    }
    super::ensure_finite(a, "thin_svd input")?;
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, MAX_ITERS)
        .ok_or(Error::NonConvergence {
            routine: "golub-kahan svd",
            iterations: MAX_ITERS,
        })?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => unreachable!("both singular vector sets were requested"),
    };
    let p = svd.singular_values.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();
    let u = Mat::from_fn(u.nrows(), p, |r, c| u[(r, order[c])]);
    let w = Mat::from_fn(v_t.ncols(), p, |r, c| v_t[(order[c], r)]);
    Ok(Svd { u, s, w })
}

/// Number of singular values above `rel_tol · s₁`.
pub fn numerical_rank(s: &[f64], rel_tol: f64) -> usize {
    match s.first() {
        Some(&s1) if s1 > 0.0 => s.iter().take_while(|&&x| x > rel_tol * s1).count(),
        _ => 0,
    }
}
