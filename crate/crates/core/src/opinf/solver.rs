//! PSD-constrained least squares for `(M, D, K, B)`.
//!
//! Unknowns are stacked as `θ = (svec M, svec D, svec K, vec B)` where `svec`
//! keeps the diagonal and scales off-diagonal entries by √2, so `‖θ‖` is the
//! Frobenius norm of the operator tuple. With the data blocks stacked as
//! `Z = [Ẍ; Ẋ; X; U]` and `W = [M D K −B]` the objective is
//! `‖W Z‖² = θᵀ H θ`, and `H` only depends on the Gram matrix `Z Zᵀ`.
//!
//! The feasible set is `{M ⪰ 0, tr M = τ} × PSD × PSD × ℝ^{r×m}`.
//!
//! The ridge enters as `λ‖θ − c‖²`. The first solve uses `c = 0`; each
//! refinement re-centres on the previous solution and re-solves exactly on its
//! face, so the ridge bias shrinks geometrically (iterated Tikhonov).

use log::{debug, warn};

use super::{
    dynamics_objective, InferOptions, ModelDiagnostics, Provenance, ReducedModel, SolveReport, SolverMode,
    Termination,
};
use crate::error::{Error, Result};
use crate::numkernel::{min_eigenvalue, sym_eig, Cholesky, Mat, Vector};
use crate::podspace::CompressedData;

const CHECK_EVERY: usize = 10;
const FIRST_POLISH: usize = 20;
const FACE_THRESHOLDS: [f64; 3] = [1e-7, 1e-10, 1e-4];
const OVER_RELAXATION: f64 = 1.6;
const MAX_REFACTORS: usize = 12;

#[derive(Debug, Clone, Copy)]
struct Layout {
    r: usize,
    m: usize,
    ns: usize,
}

impl Layout {
    fn new(r: usize, m: usize) -> Self {
        Self { r, m, ns: r * (r + 1) / 2 }
    }

    fn n(&self) -> usize {
        3 * self.ns + self.r * self.m
    }

    fn block(&self, b: usize) -> std::ops::Range<usize> {
        b * self.ns..(b + 1) * self.ns
    }

    /// Upper-triangle index pairs in storage order.
    fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.r).flat_map(|i| (i..self.r).map(move |j| (i, j))).collect()
    }

    fn svec_into(&self, s: &Mat, out: &mut [f64]) {
        for (p, (i, j)) in self.pairs().into_iter().enumerate() {
            out[p] = if i == j { s[(i, i)] } else { std::f64::consts::SQRT_2 * 0.5 * (s[(i, j)] + s[(j, i)]) };
        }
    }

    fn smat(&self, v: &[f64]) -> Mat {
        let mut s = Mat::zeros(self.r, self.r);
        for (p, (i, j)) in self.pairs().into_iter().enumerate() {
            if i == j {
                s[(i, i)] = v[p];
            } else {
                let x = v[p] * std::f64::consts::FRAC_1_SQRT_2;
                s[(i, j)] = x;
                s[(j, i)] = x;
            }
        }
        s
    }

    /// Entries of `W` touched by coordinate `p`, as `(row, column of Z, weight)`.
    fn stencil(&self) -> Vec<Vec<(usize, usize, f64)>> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut out = Vec::with_capacity(self.n());
        for b in 0..3 {
            for (i, j) in self.pairs() {
                out.push(if i == j {
                    vec![(i, b * self.r + i, 1.0)]
                } else {
                    vec![(i, b * self.r + j, h), (j, b * self.r + i, h)]
                });
            }
        }
        for j in 0..self.m {
            for i in 0..self.r {
                out.push(vec![(i, 3 * self.r + j, -1.0)]);
            }
        }
        out
    }
}

/// Orthonormal basis of the orthogonal complement of the columns of `v`.
fn complement_basis(v: &Mat) -> Result<Mat> {
    let r = v.nrows();
    if v.ncols() == 0 {
        return Ok(Mat::identity(r, r));
    }
    let eig = sym_eig(&(Mat::identity(r, r) - v * v.transpose()))?;
    let kept: Vec<usize> = (0..r).filter(|&i| eig.values[i] > 0.5).collect();
    Ok(eig.vectors.select_columns(&kept))
}

/// Projection of the eigenvalues onto `{μ ≥ 0, Σμ = τ}`: returns the shift `s`
/// such that the projected values are `max(μ − s, 0)`.
fn simplex_shift(values: &[f64], tau: f64) -> f64 {
    let mut u = values.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut shift = 0.0;
    for (j, &v) in u.iter().enumerate() {
        acc += v;
        let candidate = (acc - tau) / (j + 1) as f64;
        if v - candidate > 0.0 {
            shift = candidate;
        }
    }
    shift
}

struct Problem {
    layout: Layout,
    /// `H + λI`.
    q: Mat,
    gauge: Vector,
    tau: f64,
    ridge: f64,
    center: Vector,
}

impl Problem {
    /// `θᵀHθ + λ‖θ − c‖²`.
    fn objective(&self, theta: &Vector) -> f64 {
        theta.dot(&(&self.q * theta)) - 2.0 * self.ridge * self.center.dot(theta) + self.ridge * self.center.norm_squared()
    }

    fn gradient(&self, theta: &Vector) -> Vector {
        (&self.q * theta - &self.center * self.ridge) * 2.0
    }

    /// `λc`, the linear term of the objective.
    fn pull(&self) -> Vector {
        &self.center * self.ridge
    }

    fn project(&self, theta: &Vector) -> Result<Vector> {
        let lay = self.layout;
        let mut out = theta.clone();
        for b in 0..3 {
            let range = lay.block(b);
            let s = lay.smat(&theta.as_slice()[range.clone()]);
            let eig = sym_eig(&s)?;
            let projected = if b == 0 {
                let shift = simplex_shift(&eig.values, self.tau);
                eig.recompose(|l| (l - shift).max(0.0))
            } else if eig.values.iter().all(|&l| l >= 0.0) {
                continue;
            } else {
                eig.recompose(|l| l.max(0.0))
            };
            lay.svec_into(&projected, &mut out.as_mut_slice()[range]);
        }
        Ok(out)
    }

    fn natural_residual(&self, theta: &Vector) -> Result<f64> {
        let step = theta - self.gradient(theta);
        Ok((theta - self.project(&step)?).norm())
    }

    /// Orthonormal bases of the eigenvectors of each block of `theta` above
    /// `rel · λ_max`.
    fn faces(&self, theta: &Vector, rel: f64) -> Result<[Mat; 3]> {
        let lay = self.layout;
        let mut out: [Mat; 3] = Default::default();
        for (b, face) in out.iter_mut().enumerate() {
            let eig = sym_eig(&lay.smat(&theta.as_slice()[lay.block(b)]))?;
            let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
            let kept: Vec<usize> = (0..lay.r).filter(|&i| eig.values[i] > rel * top && eig.values[i] > 0.0).collect();
            *face = eig.vectors.select_columns(&kept);
        }
        Ok(out)
    }

    /// Minimizer over the tangent spaces `{V S Vᵀ + V W Pᵀ + P Wᵀ Vᵀ}` of the
    /// faces (`P` spans the complement of `V`) with the trace condition.
    /// Not projected.
    fn face_solve(&self, faces: &[Mat; 3]) -> Result<Option<Vector>> {
        let lay = self.layout;
        let n = lay.n();
        if faces[0].ncols() == 0 {
            return Ok(None);
        }
        let sym = |a: nalgebra::DVectorView<f64>, b: nalgebra::DVectorView<f64>, same: bool| -> Mat {
            if same {
                a * a.transpose()
            } else {
                (a * b.transpose() + b * a.transpose()) * std::f64::consts::FRAC_1_SQRT_2
            }
        };
        let mut columns: Vec<Vector> = Vec::new();
        for (b, v) in faces.iter().enumerate() {
            let complement = complement_basis(v)?;
            let mut push = |s: Mat| {
                let mut col = Vector::zeros(n);
                lay.svec_into(&s, &mut col.as_mut_slice()[lay.block(b)]);
                columns.push(col);
            };
            for i in 0..v.ncols() {
                for j in i..v.ncols() {
                    push(sym(v.column(i), v.column(j), i == j));
                }
                for j in 0..complement.ncols() {
                    push(sym(v.column(i), complement.column(j), false));
                }
            }
        }
        for p in 3 * lay.ns..n {
            let mut col = Vector::zeros(n);
            col[p] = 1.0;
            columns.push(col);
        }
        let basis = Mat::from_columns(&columns);
        let reduced = basis.transpose() * (&self.q * &basis);
        let a = basis.transpose() * &self.gauge;
        let Ok(chol) = Cholesky::factor(&crate::numkernel::symmetrize(&reduced)) else {
            return Ok(None);
        };
        Ok(self
            .gauge_constrained(&chol, &a, &(basis.transpose() * self.pull()))
            .map(|y| basis * y))
    }

    /// Add complement directions where the gradient at `candidate`, shifted by
    /// the trace multiplier for `M`, is negative. Returns whether a face grew.
    fn grow_faces(&self, faces: &mut [Mat; 3], candidate: &Vector, tol: f64) -> Result<bool> {
        let lay = self.layout;
        let r = lay.r;
        let grad = self.gradient(candidate);
        let mut changed = false;
        for (b, face) in faces.iter_mut().enumerate() {
            let g = lay.smat(&grad.as_slice()[lay.block(b)]);
            let k = face.ncols();
            let mu = if b == 0 && k > 0 { (face.transpose() * &g * &*face).trace() / k as f64 } else { 0.0 };
            let complement = Mat::identity(r, r) - &*face * face.transpose();
            let shifted = &complement * (g - Mat::identity(r, r) * mu) * &complement;
            let outer = sym_eig(&crate::numkernel::symmetrize(&shifted))?;
            let add: Vec<usize> = (0..r).filter(|&i| outer.values[i] < -0.5 * tol).collect();
            if !add.is_empty() && k + add.len() <= r {
                let mut cols: Vec<Vector> = face.column_iter().map(|c| c.into_owned()).collect();
                cols.extend(add.iter().map(|&i| outer.vectors.column(i).into_owned()));
                *face = Mat::from_columns(&cols);
                changed = true;
            }
        }
        Ok(changed)
    }

    /// Face solve starting from the eigenvalue threshold `rel`, followed by
    /// active-set corrections. Returns the projected candidate with the
    /// smallest natural residual.
    fn polish(&self, theta: &Vector, rel: f64, tol: f64) -> Result<Option<(Vector, f64)>> {
        let mut faces = self.faces(theta, rel)?;
        let mut best: Option<(Vector, f64)> = None;
        for _ in 0..=2 * self.layout.r + 2 {
            let Some(raw) = self.face_solve(&faces)? else {
                break;
            };
            let candidate = self.project(&raw)?;
            let res = self.natural_residual(&candidate)?;
            debug!(
                "face ({}, {}, {}): natural residual {res:e}, projection moved {:e}",
                faces[0].ncols(),
                faces[1].ncols(),
                faces[2].ncols(),
                (&candidate - &raw).norm()
            );
            faces = self.faces(&candidate, rel)?;
            self.grow_faces(&mut faces, &candidate, tol)?;
            if best.as_ref().is_none_or(|(_, b)| res < *b) {
                best = Some((candidate, res));
            }
            if res <= tol {
                break;
            }
        }
        Ok(best)
    }

    /// Minimizer of `yᵀRy − 2bᵀy` subject to `aᵀy = τ`, with `R` factored.
    fn gauge_constrained(&self, chol: &Cholesky, a: &Vector, b: &Vector) -> Option<Vector> {
        let ya = chol.solve_vec(a);
        let yb = chol.solve_vec(b);
        let denom = a.dot(&ya);
        if !(denom > 0.0) {
            return None;
        }
        Some(yb + ya * ((self.tau - a.dot(&chol.solve_vec(b))) / denom))
    }

    /// The minimizer under the trace condition alone.
    fn gauge_least_squares(&self, q_chol: &Cholesky) -> Vector {
        self.gauge_constrained(q_chol, &self.gauge, &self.pull())
            .unwrap_or_else(|| Vector::zeros(self.gauge.len()))
    }
}

struct Outcome {
    theta: Vector,
    residual: f64,
    iterations: usize,
    termination: Termination,
    objective: Vec<f64>,
}

/// Infer `(Mr, Dr, Kr, Br)` from compressed data. Output operators of the
/// returned model are zero; see [`super::infer_output`].
pub fn infer_dynamics(data: &CompressedData, options: &InferOptions) -> Result<ReducedModel> {
    options.validate()?;
    data.validate()?;
    let (r, k) = data.xr.shape();
    let m = data.u.nrows();
    if r == 0 {
        return Err(Error::InvalidArgument("reduced order must be at least 1".into()));
    }
    if k < 3 * r + m {
        return Err(Error::InvalidArgument(format!(
            "{k} snapshots cannot overdetermine the regression (need at least 3r + m = {})",
            3 * r + m
        )));
    }
    let lay = Layout::new(r, m);
    let n = lay.n();

    let blocks = [&data.xddr, &data.xdr, &data.xr, &data.u];
    let mut scales = [1.0; 4];
    if options.column_scaling {
        for (s, blk) in scales.iter_mut().zip(blocks) {
            let norm = blk.norm();
            if norm > 0.0 {
                *s = norm;
            }
        }
    }
    let nz = 3 * r + m;
    let mut z = Mat::zeros(nz, k);
    for (b, blk) in blocks.iter().enumerate() {
        z.rows_mut(b * r, blk.nrows()).copy_from(&(*blk / scales[b]));
    }
    let data_norm2 = z.norm_squared();
    let ridge_weight = options.ridge * if data_norm2 > 0.0 { data_norm2 } else { 1.0 };
    let gram = &z * z.transpose();

    let stencil = lay.stencil();
    let mut q = Mat::zeros(n, n);
    for p in 0..n {
        for qi in p..n {
            let mut v = 0.0;
            for &(row_a, col_a, wa) in &stencil[p] {
                for &(row_b, col_b, wb) in &stencil[qi] {
                    if row_a == row_b {
                        v += wa * wb * gram[(col_a, col_b)];
                    }
                }
            }
            q[(p, qi)] = v;
            q[(qi, p)] = v;
        }
        q[(p, p)] += ridge_weight;
    }

    let tau = options.mass_trace_for(r);
    let mut gauge = Vector::zeros(n);
    for (p, (i, j)) in lay.pairs().into_iter().enumerate() {
        if i == j {
            gauge[p] = 1.0;
        }
    }
    let mut problem = Problem {
        layout: lay,
        q,
        gauge,
        tau: tau * scales[0],
        ridge: ridge_weight,
        center: Vector::zeros(n),
    };

    let q_chol = match Cholesky::factor(&problem.q) {
        Ok(c) => c,
        Err(_) => {
            warn!("regression Gram matrix is singular and ridge is zero; adding a minimal Tikhonov term");
            let shift = f64::EPSILON * problem.q.trace().max(1.0);
            Cholesky::factor(&(&problem.q + Mat::identity(n, n) * shift))?
        }
    };
    if q_chol.min_pivot().powi(2) <= 10.0 * ridge_weight {
        debug!("regression is rank-deficient up to the ridge weight {ridge_weight:e}; the trace condition and ridge select the minimizer");
    }
    let theta0 = problem.project(&problem.gauge_least_squares(&q_chol))?;
    let g0 = problem.gradient(&theta0).norm();
    let tol = options.kkt_tol * (1.0 + g0);

    let mut outcome = match options.solver {
        SolverMode::Admm => admm(&problem, theta0, tol, options.max_iters)?,
        SolverMode::ProjectedGradient => projected_gradient(&problem, theta0, tol, options.max_iters)?,
    };
    if outcome.termination != Termination::MaxIterations && ridge_weight > 0.0 {
        refine(&mut problem, &mut outcome, tol, options.refinements)?;
    }

    let theta = outcome.theta.as_slice();
    let mut mr = lay.smat(&theta[lay.block(0)]) / scales[0];
    let dr = lay.smat(&theta[lay.block(1)]) / scales[1];
    let kr = lay.smat(&theta[lay.block(2)]) / scales[2];
    let br = Mat::from_column_slice(r, m, &theta[3 * lay.ns..]) / scales[3];
    let mut mass_shift = 0.0;
    let min_m = min_eigenvalue(&mr)?;
    if min_m < options.mass_floor {
        mass_shift = options.mass_floor - min_m;
        mr += Mat::identity(r, r) * mass_shift;
    }
    let min_eigenvalues = [min_eigenvalue(&mr)?, min_eigenvalue(&dr)?, min_eigenvalue(&kr)?];
    let report = SolveReport {
        mode: options.solver,
        objective: outcome.objective,
        iterations: outcome.iterations,
        termination: outcome.termination,
        natural_residual: outcome.residual,
        tolerance: tol,
        initial_gradient_norm: g0,
        min_eigenvalues,
        column_scales: scales,
        ridge_weight,
        mass_trace: tau,
        mass_shift,
    };
    if outcome.termination == Termination::MaxIterations {
        return Err(Error::InferenceFailed(Box::new(report)));
    }
    let p = data.y.nrows();
    let objective = dynamics_objective(data, &mr, &dr, &kr, &br);
    Ok(ReducedModel {
        m: mr,
        d: dr,
        k: kr,
        b: br,
        cp: Mat::zeros(p, r),
        cv: Mat::zeros(p, r),
        provenance: Provenance::Inferred,
        diagnostics: ModelDiagnostics {
            dynamics_objective: Some(objective),
            output_residual: None,
            min_eigenvalues,
            solve: Some(report),
        },
    })
}

/// Polish attempts happen at iterations 20, 40, 80, ... and at the end.
fn polish_due(it: usize) -> bool {
    it >= FIRST_POLISH && (it / FIRST_POLISH).is_power_of_two() && it % FIRST_POLISH == 0
}

fn try_polish(problem: &Problem, theta: &Vector, tol: f64) -> Result<Option<(Vector, f64)>> {
    let mut best: Option<(Vector, f64)> = None;
    for rel in FACE_THRESHOLDS {
        if let Some((candidate, res)) = problem.polish(theta, rel, tol)? {
            debug!("face polish at threshold {rel:e}: natural residual {res:e}");
            if best.as_ref().is_none_or(|(_, b)| res < *b) {
                best = Some((candidate, res));
            }
            if res <= tol {
                break;
            }
        }
    }
    Ok(best)
}

/// Re-centre the ridge on the current solution and re-solve on its face.
fn refine(problem: &mut Problem, outcome: &mut Outcome, tol: f64, rounds: usize) -> Result<()> {
    for round in 0..rounds {
        problem.center = outcome.theta.clone();
        let Some((candidate, res)) = try_polish(problem, &outcome.theta, tol)? else {
            return Ok(());
        };
        let phi = problem.objective(&candidate);
        if res > tol || phi > problem.objective(&outcome.theta) {
            debug!("refinement {round} rejected: natural residual {res:e}");
            return Ok(());
        }
        let moved = (&candidate - &outcome.theta).norm();
        outcome.objective.push(phi);
        outcome.theta = candidate;
        outcome.residual = res;
        if moved <= f64::EPSILON * outcome.theta.norm() {
            return Ok(());
        }
    }
    Ok(())
}

fn admm(problem: &Problem, theta0: Vector, tol: f64, max_iters: usize) -> Result<Outcome> {
    let n = problem.layout.n();
    let mut rho = (problem.q.trace() / n as f64).max(f64::MIN_POSITIVE) * 2.0;
    let factor = |rho: f64| Cholesky::factor(&(&problem.q * 2.0 + Mat::identity(n, n) * rho));
    let mut chol = factor(rho)?;
    let mut refactors = 0;
    let mut z = theta0;
    let mut w = Vector::zeros(n);
    let mut objective = vec![problem.objective(&z)];
    let mut best = (z.clone(), problem.natural_residual(&z)?);
    if best.1 <= tol {
        return Ok(Outcome {
            theta: best.0,
            residual: best.1,
            iterations: 0,
            termination: Termination::Converged,
            objective,
        });
    }
    for it in 1..=max_iters {
        let x = chol.solve_vec(&((&z - &w) * rho + problem.pull() * 2.0));
        let xh = &x * OVER_RELAXATION + &z * (1.0 - OVER_RELAXATION);
        let z_old = std::mem::replace(&mut z, problem.project(&(&xh + &w))?);
        w += &xh - &z;
        objective.push(problem.objective(&z));

        if it % CHECK_EVERY == 0 || it == max_iters {
            let res = problem.natural_residual(&z)?;
            if res < best.1 {
                best = (z.clone(), res);
            }
            if res <= tol {
                return Ok(Outcome {
                    theta: z,
                    residual: res,
                    iterations: it,
                    termination: Termination::Converged,
                    objective,
                });
            }
            if polish_due(it) || it == max_iters {
                if let Some((candidate, res)) = try_polish(problem, &z, tol)? {
                    if res < best.1 {
                        best = (candidate.clone(), res);
                    }
                    if res <= tol {
                        objective.push(problem.objective(&candidate));
                        return Ok(Outcome {
                            theta: candidate,
                            residual: res,
                            iterations: it,
                            termination: Termination::Polished,
                            objective,
                        });
                    }
                }
            }
            let primal = (&x - &z).norm();
            let dual = rho * (&z - &z_old).norm();
            if refactors < MAX_REFACTORS && it % (5 * CHECK_EVERY) == 0 {
                let ratio = primal / dual.max(f64::MIN_POSITIVE);
                let scale = if ratio > 10.0 {
                    5.0
                } else if ratio < 0.1 {
                    0.2
                } else {
                    1.0
                };
                if scale != 1.0 {
                    rho *= scale;
                    w /= scale;
                    chol = factor(rho)?;
                    refactors += 1;
                    debug!("admm iteration {it}: primal {primal:e}, dual {dual:e}, rho -> {rho:e}");
                }
            }
        }
    }
    Ok(Outcome {
        theta: best.0,
        residual: best.1,
        iterations: max_iters,
        termination: Termination::MaxIterations,
        objective,
    })
}

fn projected_gradient(problem: &Problem, theta0: Vector, tol: f64, max_iters: usize) -> Result<Outcome> {
    // ‖2Q‖_F bounds the Lipschitz constant of the gradient from above.
    let lipschitz = (problem.q.norm() * 2.0).max(f64::MIN_POSITIVE);
    let mut z = theta0;
    let mut phi = problem.objective(&z);
    let mut objective = vec![phi];
    for it in 1..=max_iters {
        z = problem.project(&(&z - problem.gradient(&z) / lipschitz))?;
        phi = problem.objective(&z);
        objective.push(phi);
        if it % CHECK_EVERY == 0 || it == max_iters {
            let res = problem.natural_residual(&z)?;
            if res <= tol {
                return Ok(Outcome {
                    theta: z,
                    residual: res,
                    iterations: it,
                    termination: Termination::Converged,
                    objective,
                });
            }
            if polish_due(it) || it == max_iters {
                if let Some((candidate, res)) = try_polish(problem, &z, tol)? {
                    let cand_phi = problem.objective(&candidate);
                    if cand_phi <= phi {
                        z = candidate;
                        phi = cand_phi;
                        objective.push(phi);
                        if res <= tol {
                            return Ok(Outcome {
                                theta: z,
                                residual: res,
                                iterations: it,
                                termination: Termination::Polished,
                                objective,
                            });
                        }
                    }
                }
            }
        }
    }
    let residual = problem.natural_residual(&z)?;
    Ok(Outcome {
        theta: z,
        residual,
        iterations: max_iters,
        termination: Termination::MaxIterations,
        objective,
    })
}
