//! Newmark time integration of the full-order DAE with the algebraic
//! constraint embedded in every step.
//!
//! Each step forms the predictors
//!
//! ```text
//! x* = x_j + h v_j + h²(1/2 − β) a_j        v* = v_j + h(1 − γ) a_j
//! ```
//!
//! and solves one saddle-point system for the new acceleration and multiplier
//!
//! ```text
//! [ M + γhD + βh²K   Gᵀ ] [ a_{j+1} ]   [ B u_{j+1} − D v* − K x* ]
//! [ c·G              0  ] [ λ_{j+1} ] = [ g                       ]
//! ```
//!
//! with `c = βh²`, `g = −G x*` for position constraints (so `G x_{j+1} = 0`)
//! and `c = γh`, `g = −G v*` for velocity constraints (so `G v_{j+1} = 0`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ConstraintKind, SecondOrderDAE};
use crate::numkernel::{kernel_basis, Cholesky, Mat, SaddleFactor, Vector};
use crate::{fsutil, mtx};

/// Enforced bound on the constraint residual, relative to `max(1, max|state|)`.
pub const CONSTRAINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            t0: 0.0,
            dt: 1e-2,
            steps: 2000,
        }
    }
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        let grid = Self { t0, dt, steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() || !self.t0.is_finite() {
            return Err(Error::InvalidArgument(format!("time grid needs finite t0 and dt > 0, got dt = {}", self.dt)));
        }
        if self.steps < 1 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        Ok(())
    }

    /// Number of sampled time points, `steps + 1` (the initial time included).
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.time(j)).collect()
    }

    /// Same start and step, `steps` shortened.
    pub fn truncated(&self, steps: usize) -> Self {
        Self {
            steps: steps.clamp(1, self.steps),
            ..*self
        }
    }
}

/// External load `u(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSignal {
    /// Half-sine pulse `A sin(π t / width)` on `[0, width]`, zero afterwards.
    Impulse { amplitude: f64, width: f64 },
    /// `A sin(ω t + φ)`.
    Harmonic {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise-linear table, one value row per channel, held constant
    /// outside the tabulated range.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
    Zero { channels: usize },
}

impl InputSignal {
    pub fn impulse(amplitude: f64, width: f64) -> Result<Self> {
        let s = InputSignal::Impulse { amplitude, width };
        s.validate()?;
        Ok(s)
    }

    pub fn harmonic(amplitude: f64, omega: f64) -> Result<Self> {
        let s = InputSignal::Harmonic {
            amplitude,
            omega,
            phase: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self {
            InputSignal::Impulse { amplitude, width } => {
                positive("impulse amplitude", *amplitude)?;
                positive("impulse width", *width)
            }
            InputSignal::Harmonic {
                amplitude,
                omega,
                phase,
            } => {
                positive("harmonic amplitude", *amplitude)?;
                positive("harmonic omega", *omega)?;
                if phase.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument("harmonic phase must be finite".into()))
                }
            }
            InputSignal::Table { times, values } => {
                if times.is_empty() {
                    return Err(Error::InvalidArgument("input table has no time points".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidArgument("input table times must be strictly increasing".into()));
                }
                if values.is_empty() || values.iter().any(|row| row.len() != times.len()) {
                    return Err(Error::InvalidArgument(
                        "input table needs one value row per channel, each as long as `times`".into(),
                    ));
                }
                if times.iter().chain(values.iter().flatten()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("input table contains non-finite values".into()));
                }
                Ok(())
            }
            InputSignal::Zero { .. } => Ok(()),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            InputSignal::Impulse { .. } | InputSignal::Harmonic { .. } => 1,
            InputSignal::Table { values, .. } => values.len(),
            InputSignal::Zero { channels } => *channels,
        }
    }

    pub fn eval(&self, t: f64) -> Vector {
        match self {
            InputSignal::Impulse { amplitude, width } => {
                let v = if (0.0..=*width).contains(&t) {
                    amplitude * (std::f64::consts::PI * t / width).sin()
                } else {
                    0.0
                };
                Vector::from_element(1, v)
            }
            InputSignal::Harmonic {
                amplitude,
                omega,
                phase,
            } => Vector::from_element(1, amplitude * (omega * t + phase).sin()),
            InputSignal::Table { times, values } => {
                let idx = times.partition_point(|&s| s <= t);
                Vector::from_iterator(
                    values.len(),
                    values.iter().map(|row| {
                        if idx == 0 {
                            row[0]
                        } else if idx == times.len() {
                            row[times.len() - 1]
                        } else {
                            let (t0, t1) = (times[idx - 1], times[idx]);
                            let w = (t - t0) / (t1 - t0);
                            row[idx - 1] * (1.0 - w) + row[idx] * w
                        }
                    }),
                )
            }
            InputSignal::Zero { channels } => Vector::zeros(*channels),
        }
    }

    /// `m × len` matrix of samples on the grid.
    pub fn sample(&self, grid: &TimeGrid) -> Mat {
        let mut u = Mat::zeros(self.channels(), grid.len());
        for j in 0..grid.len() {
            u.set_column(j, &self.eval(grid.time(j)));
        }
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewmarkParams {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for NewmarkParams {
    /// Average acceleration (trapezoidal) rule.
    fn default() -> Self {
        Self {
            beta: 0.25,
            gamma: 0.5,
        }
    }
}

impl NewmarkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(Error::InvalidArgument(format!("Newmark beta must lie in (0, 1/2], got {}", self.beta)));
        }
        if !(0.5..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("Newmark gamma must lie in [1/2, 1], got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Consistent initial data of the DAE.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub x: Vector,
    pub v: Vector,
    pub a: Vector,
    pub lambda: Vector,
}

fn project_onto_kernel(basis: &Mat, x: &Vector) -> Vector {
    basis * (basis.transpose() * x)
}

/// Project the initial displacement/velocity onto the constraint manifold and
/// solve for the matching acceleration and multiplier.
pub fn consistent_initialize(sys: &SecondOrderDAE, x0: &Vector, v0: &Vector, u0: &Vector) -> Result<InitialState> {
    let n = sys.dim();
    if x0.len() != n || v0.len() != n {
        return Err(Error::dim("initial state", n, x0.len().max(v0.len())));
    }
    if u0.len() != sys.n_inputs() {
        return Err(Error::dim("initial input", sys.n_inputs(), u0.len()));
    }
    let g = sys.jacobian();
    let basis = kernel_basis(g)?;
    let (x, v) = match sys.constraint_kind() {
        ConstraintKind::Position => (project_onto_kernel(&basis, x0), project_onto_kernel(&basis, v0)),
        ConstraintKind::Velocity => (x0.clone(), project_onto_kernel(&basis, v0)),
    };
    let rhs = &sys.b * u0 - &sys.d * &v - &sys.k * &x;
    let (a, lambda) = SaddleFactor::new(&sys.m, g)?.solve(&rhs, &Vector::zeros(g.nrows()))?;
    Ok(InitialState { x, v, a, lambda })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaeOptions {
    /// Orthogonally project velocities onto `ker G` after each step
    /// (position constraints only).
    pub project_velocity: bool,
    pub constraint_tol: f64,
}

impl Default for DaeOptions {
    fn default() -> Self {
        Self {
            project_velocity: false,
            constraint_tol: CONSTRAINT_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SnapshotDiagnostics {
    /// Largest enforced constraint residual (`‖G x‖_∞` or `‖G ẋ‖_∞`).
    pub max_constraint_residual: f64,
    /// Largest hidden-constraint residual (`‖G ẋ‖_∞` or `‖G ẍ‖_∞`), monitored only.
    pub max_hidden_drift: f64,
}

/// Column `j` of every matrix belongs to `grid.time(j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub grid: TimeGrid,
    pub x: Mat,
    pub xd: Mat,
    pub xdd: Mat,
    pub u: Mat,
    pub y: Mat,
    pub lambda: Mat,
    pub diagnostics: SnapshotDiagnostics,
}

pub fn newmark_dae(sys: &SecondOrderDAE, grid: &TimeGrid, input: &InputSignal, params: &NewmarkParams) -> Result<SnapshotSet> {
    let n = sys.dim();
    let m = input.channels();
    if m != sys.n_inputs() {
        return Err(Error::dim("input channels", sys.n_inputs(), m));
    }
    let u0 = input.eval(grid.t0);
    let init = consistent_initialize(sys, &Vector::zeros(n), &Vector::zeros(n), &u0)?;
    newmark_dae_from(sys, grid, input, params, &init, &DaeOptions::default())
}

pub fn newmark_dae_from(
    sys: &SecondOrderDAE,
    grid: &TimeGrid,
    input: &InputSignal,
    params: &NewmarkParams,
    init: &InitialState,
    options: &DaeOptions,
) -> Result<SnapshotSet> {
    grid.validate()?;
    params.validate()?;
    input.validate()?;
    let n = sys.dim();
    if input.channels() != sys.n_inputs() {
        return Err(Error::dim("input channels", sys.n_inputs(), input.channels()));
    }
    if init.x.len() != n || init.v.len() != n || init.a.len() != n || init.lambda.len() != sys.n_constraints() {
        return Err(Error::dim("initial state", n, init.x.len()));
    }
    let (h, beta, gamma) = (grid.dt, params.beta, params.gamma);
    let kind = sys.constraint_kind();
    let g = sys.jacobian();
    let row_scale = match kind {
        ConstraintKind::Position => beta * h * h,
        ConstraintKind::Velocity => gamma * h,
    };
    let effective = &sys.m + &sys.d * (gamma * h) + &sys.k * (beta * h * h);
    let saddle = SaddleFactor::new(&effective, g)?;
    let velocity_projector = if options.project_velocity && kind == ConstraintKind::Position && g.nrows() > 0 {
        Some(Cholesky::factor(&(g * g.transpose()))?)
    } else {
        None
    };

    let k = grid.len();
    let mut out = SnapshotSet {
        grid: *grid,
        x: Mat::zeros(n, k),
        xd: Mat::zeros(n, k),
        xdd: Mat::zeros(n, k),
        u: input.sample(grid),
        y: Mat::zeros(sys.n_outputs(), k),
        lambda: Mat::zeros(g.nrows(), k),
        diagnostics: SnapshotDiagnostics::default(),
    };
    let (mut x, mut v, mut a) = (init.x.clone(), init.v.clone(), init.a.clone());
    let mut scale = x.amax().max(v.amax()).max(1.0);
    record(&mut out, sys, 0, &x, &v, &a, &init.lambda);
    update_diagnostics(&mut out.diagnostics, kind, g, &x, &v, &a);

    for j in 1..k {
        let x_pred = &x + &v * h + &a * (h * h * (0.5 - beta));
        let v_pred = &v + &a * (h * (1.0 - gamma));
        let u = out.u.column(j).into_owned();
        let rhs = &sys.b * &u - &sys.d * &v_pred - &sys.k * &x_pred;
        let target = match kind {
            ConstraintKind::Position => -(g * &x_pred),
            ConstraintKind::Velocity => -(g * &v_pred),
        } / row_scale;
        let (mut a_new, mut lam) = saddle.solve(&rhs, &target)?;
        let mut x_new = &x_pred + &a_new * (beta * h * h);
        let mut v_new = &v_pred + &a_new * (gamma * h);
        scale = scale.max(x_new.amax()).max(v_new.amax());
        let tol = options.constraint_tol * scale;

        let mut residual = enforced_residual(kind, g, &x_new, &v_new);
        if residual > tol {
            // One round of iterative refinement before giving up.
            let force_defect = &rhs - &effective * &a_new - g.transpose() * &lam;
            let constraint_defect = &target - g * &a_new;
            let (da, dl) = saddle.solve(&force_defect, &constraint_defect)?;
            a_new += da;
            lam += dl;
            x_new = &x_pred + &a_new * (beta * h * h);
            v_new = &v_pred + &a_new * (gamma * h);
            residual = enforced_residual(kind, g, &x_new, &v_new);
            if residual > tol {
                return Err(Error::ConstraintDrift {
                    step: j,
                    residual,
                    tolerance: tol,
                });
            }
        }
        if let Some(ggt) = &velocity_projector {
            let correction = g.transpose() * ggt.solve_vec(&(g * &v_new));
            v_new -= correction;
        }
        x = x_new;
        v = v_new;
        a = a_new;
        record(&mut out, sys, j, &x, &v, &a, &lam);
        update_diagnostics(&mut out.diagnostics, kind, g, &x, &v, &a);
    }
    Ok(out)
}

fn enforced_residual(kind: ConstraintKind, g: &Mat, x: &Vector, v: &Vector) -> f64 {
    if g.nrows() == 0 {
        return 0.0;
    }
    match kind {
        ConstraintKind::Position => (g * x).amax(),
        ConstraintKind::Velocity => (g * v).amax(),
    }
}

fn update_diagnostics(diag: &mut SnapshotDiagnostics, kind: ConstraintKind, g: &Mat, x: &Vector, v: &Vector, a: &Vector) {
    if g.nrows() == 0 {
        return;
    }
    let (enforced, hidden) = match kind {
        ConstraintKind::Position => ((g * x).amax(), (g * v).amax()),
        ConstraintKind::Velocity => ((g * v).amax(), (g * a).amax()),
    };
    diag.max_constraint_residual = diag.max_constraint_residual.max(enforced);
    diag.max_hidden_drift = diag.max_hidden_drift.max(hidden);
}

fn record(out: &mut SnapshotSet, sys: &SecondOrderDAE, j: usize, x: &Vector, v: &Vector, a: &Vector, lam: &Vector) {
    out.x.set_column(j, x);
    out.xd.set_column(j, v);
    out.xdd.set_column(j, a);
    out.lambda.set_column(j, lam);
    let y = &sys.cp * x + &sys.cv * v;
    out.y.set_column(j, &y);
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    /// Keep the first `steps + 1` columns.
    pub fn truncated(&self, steps: usize) -> SnapshotSet {
        let grid = self.grid.truncated(steps);
        let k = grid.len();
        SnapshotSet {
            grid,
            x: self.x.columns(0, k).into_owned(),
            xd: self.xd.columns(0, k).into_owned(),
            xdd: self.xdd.columns(0, k).into_owned(),
            u: self.u.columns(0, k).into_owned(),
            y: self.y.columns(0, k).into_owned(),
            lambda: self.lambda.columns(0, k).into_owned(),
            diagnostics: self.diagnostics,
        }
    }

    /// Replace `xd`/`xdd` by second-order finite differences of `x`
    /// (central inside, one-sided at the ends).
    pub fn with_finite_difference_derivatives(&self) -> Result<SnapshotSet> {
        if self.len() < 3 {
            return Err(Error::InvalidArgument("finite differences need at least 3 snapshots".into()));
        }
        let mut out = self.clone();
        out.xd = central_difference(&self.x, self.grid.dt);
        out.xdd = central_difference(&out.xd, self.grid.dt);
        Ok(out)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        mtx::write_array(&dir.join("X.mtx"), &self.x)?;
        mtx::write_array(&dir.join("Xd.mtx"), &self.xd)?;
        mtx::write_array(&dir.join("Xdd.mtx"), &self.xdd)?;
        mtx::write_array(&dir.join("U.mtx"), &self.u)?;
        mtx::write_array(&dir.join("Y.mtx"), &self.y)?;
        mtx::write_array(&dir.join("Lambda.mtx"), &self.lambda)?;
        fsutil::write_json(
            &dir.join("snapshots.json"),
            &SnapshotMeta {
                grid: self.grid,
                diagnostics: self.diagnostics,
            },
        )?;
        write_trajectory_csv(&dir.join("trajectory.csv"), &self.grid, &self.y, &self.u)
    }

    pub fn read_dir(dir: &Path) -> Result<SnapshotSet> {
        let meta_path = dir.join("snapshots.json");
        if !meta_path.is_file() {
            return Err(Error::MissingArtifact {
                what: "snapshot set".into(),
                path: dir.to_path_buf(),
            });
        }
        let meta: SnapshotMeta = fsutil::read_json(&meta_path)?;
        let set = SnapshotSet {
            grid: meta.grid,
            x: mtx::read(&dir.join("X.mtx"))?,
            xd: mtx::read(&dir.join("Xd.mtx"))?,
            xdd: mtx::read(&dir.join("Xdd.mtx"))?,
            u: mtx::read(&dir.join("U.mtx"))?,
            y: mtx::read(&dir.join("Y.mtx"))?,
            lambda: mtx::read(&dir.join("Lambda.mtx"))?,
            diagnostics: meta.diagnostics,
        };
        let k = set.grid.len();
        for (name, mat) in [("X", &set.x), ("Xd", &set.xd), ("Xdd", &set.xdd), ("U", &set.u), ("Y", &set.y), ("Lambda", &set.lambda)] {
            if mat.ncols() != k {
                return Err(Error::dim(format!("snapshot matrix {name} columns"), k, mat.ncols()));
            }
        }
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotMeta {
    grid: TimeGrid,
    diagnostics: SnapshotDiagnostics,
}

fn central_difference(x: &Mat, h: f64) -> Mat {
    let k = x.ncols();
    let mut d = Mat::zeros(x.nrows(), k);
    for j in 1..k - 1 {
        d.set_column(j, &((x.column(j + 1) - x.column(j - 1)) / (2.0 * h)));
    }
    d.set_column(
        0,
        &((x.column(0) * -3.0 + x.column(1) * 4.0 - x.column(2)) / (2.0 * h)),
    );
    d.set_column(
        k - 1,
        &((x.column(k - 1) * 3.0 - x.column(k - 2) * 4.0 + x.column(k - 3)) / (2.0 * h)),
    );
    d
}

/// `t, y_1..y_p, u_1..u_m`, one row per grid point, 17 significant digits.
pub fn write_trajectory_csv(path: &Path, grid: &TimeGrid, y: &Mat, u: &Mat) -> Result<()> {
    fsutil::write_atomic(path, trajectory_csv(grid, y, u).as_bytes())
}

pub fn trajectory_csv(grid: &TimeGrid, y: &Mat, u: &Mat) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("t");
    for i in 1..=y.nrows() {
        let _ = write!(out, ",y_{i}");
    }
    for i in 1..=u.nrows() {
        let _ = write!(out, ",u_{i}");
    }
    out.push('\n');
    for j in 0..y.ncols() {
        let _ = write!(out, "{:.16e}", grid.time(j));
        for v in y.column(j).iter().chain(u.column(j).iter()) {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build_anchored_chain;

    #[test]
    fn impulse_support_and_peak() {
        let s = InputSignal::impulse(2.5, 4.0).unwrap();
        assert_eq!(s.eval(4.5)[0], 0.0);
        assert_eq!(s.eval(-0.1)[0], 0.0);
        assert!((s.eval(2.0)[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn harmonic_starts_at_zero() {
        let s = InputSignal::harmonic(3.0, 0.7).unwrap();
        assert_eq!(s.eval(0.0)[0], 0.0);
        assert!((s.eval(1.0)[0] - 3.0 * 0.7f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn invalid_signals_rejected() {
        assert!(InputSignal::impulse(0.0, 1.0).is_err());
        assert!(InputSignal::impulse(1.0, -1.0).is_err());
        assert!(InputSignal::harmonic(1.0, 0.0).is_err());
        let table = InputSignal::Table {
            times: vec![0.0, 0.0],
            values: vec![vec![1.0, 2.0]],
        };
        assert!(table.validate().is_err());
    }

    #[test]
    fn table_interpolates_linearly() {
        let s = InputSignal::Table {
            times: vec![0.0, 1.0, 3.0],
            values: vec![vec![0.0, 2.0, -2.0], vec![1.0, 1.0, 1.0]],
        };
        s.validate().unwrap();
        assert_eq!(s.channels(), 2);
        assert_eq!(s.eval(0.5)[0], 1.0);
        assert_eq!(s.eval(2.0)[0], 0.0);
        assert_eq!(s.eval(10.0)[0], -2.0);
        assert_eq!(s.eval(-1.0)[1], 1.0);
    }

    #[test]
    fn newmark_parameter_ranges() {
        assert!(NewmarkParams { beta: 0.0, gamma: 0.5 }.validate().is_err());
        assert!(NewmarkParams { beta: 0.6, gamma: 0.5 }.validate().is_err());
        assert!(NewmarkParams { beta: 0.25, gamma: 0.4 }.validate().is_err());
        assert!(NewmarkParams::default().validate().is_ok());
    }

    #[test]
    fn rest_state_initializes_to_zero() {
        let sys = build_anchored_chain(5, 1.0, 1.0, 1.0).unwrap();
        let z = Vector::zeros(5);
        let init = consistent_initialize(&sys, &z, &z, &Vector::zeros(1)).unwrap();
        assert_eq!(init.x, z);
        assert_eq!(init.a, z);
        assert_eq!(init.lambda, Vector::zeros(1));
    }

    #[test]
    fn initial_displacement_projected_onto_manifold() {
        let sys = build_anchored_chain(5, 1.0, 1.0, 1.0).unwrap();
        let x0 = Vector::from_vec(vec![1.0, 0.2, -0.3, 0.0, -1.0]);
        let init = consistent_initialize(&sys, &x0, &x0, &Vector::zeros(1)).unwrap();
        assert!((sys.jacobian() * &init.x).amax() <= 1e-12);
        assert!((sys.jacobian() * &init.v).amax() <= 1e-12);
        assert!((sys.jacobian() * &init.a).amax() <= 1e-12);
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let sys = build_anchored_chain(6, 1.0, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let snaps = newmark_dae(&sys, &grid, &InputSignal::Zero { channels: 1 }, &NewmarkParams::default()).unwrap();
        assert_eq!(snaps.x.amax(), 0.0);
        assert_eq!(snaps.y.amax(), 0.0);
        assert_eq!(snaps.lambda.amax(), 0.0);
    }

    #[test]
    fn finite_differences_are_exact_on_quadratics() {
        let grid = TimeGrid::new(0.0, 0.5, 6).unwrap();
        let x = Mat::from_fn(1, grid.len(), |_, j| {
            let t = grid.time(j);
            t * t - 3.0 * t
        });
        let snaps = SnapshotSet {
            grid,
            x: x.clone(),
            xd: Mat::zeros(1, grid.len()),
            xdd: Mat::zeros(1, grid.len()),
            u: Mat::zeros(1, grid.len()),
            y: Mat::zeros(1, grid.len()),
            lambda: Mat::zeros(0, grid.len()),
            diagnostics: SnapshotDiagnostics::default(),
        };
        let fd = snaps.with_finite_difference_derivatives().unwrap();
        for j in 0..grid.len() {
            let t = grid.time(j);
            assert!((fd.xd[(0, j)] - (2.0 * t - 3.0)).abs() < 1e-12);
            assert!((fd.xdd[(0, j)] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_header_layout() {
        let grid = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let csv = trajectory_csv(&grid, &Mat::zeros(2, 2), &Mat::zeros(1, 2));
        assert!(csv.starts_with("t,y_1,y_2,u_1\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
