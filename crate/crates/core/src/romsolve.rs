use std::path::Path;

use crate::daesolve::{trajectory_csv, InputSignal, NewmarkParams, TimeGrid};
use crate::error::{Error, Result};
use crate::numkernel::{min_eigenvalue, Cholesky, Mat, Vector};
use crate::opinf::ReducedModel;
use crate::podspace::PodBasis;
use crate::fsutil;

#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory {
    pub grid: TimeGrid,
    pub xr: Mat,
    pub xdr: Mat,
    pub u: Mat,
    pub y: Mat,
}

impl RomTrajectory {
    /// Same layout as the full-order `trajectory.csv`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, trajectory_csv(&self.grid, &self.y, &self.u).as_bytes())
    }

    /// `½ vᵀ M v + ½ xᵀ K x` at every grid point.
    pub fn energy(&self, rom: &ReducedModel) -> Vec<f64> {
        (0..self.xr.ncols())
            .map(|j| {
                let (x, v) = (self.xr.column(j), self.xdr.column(j));
                0.5 * (v.dot(&(&rom.m * v)) + x.dot(&(&rom.k * x)))
            })
            .collect()
    }
}

fn factor_named(s: &Mat, what: &str) -> Result<Cholesky> {
    Cholesky::factor(s).map_err(|_| {
        let min = min_eigenvalue(s).unwrap_or(f64::NAN);
        Error::Invariant(format!("{what} not positive definite (min eigenvalue {min:e})"))
    })
}

/// Classical Newmark integration of `Mr ẍ + Dr ẋ + Kr x = Br u`, `y = Cp x + Cv ẋ`.
pub fn newmark_ode(
    rom: &ReducedModel,
    grid: &TimeGrid,
    input: &InputSignal,
    params: &NewmarkParams,
    x0: &Vector,
    v0: &Vector,
) -> Result<RomTrajectory> {
    grid.validate()?;
    params.validate()?;
    input.validate()?;
    rom.validate()?;
    let r = rom.r();
    if x0.len() != r || v0.len() != r {
        return Err(Error::dim("reduced initial state", r, x0.len().max(v0.len())));
    }
    if input.channels() != rom.n_inputs() {
        return Err(Error::dim("input channels", rom.n_inputs(), input.channels()));
    }
    let (h, beta, gamma) = (grid.dt, params.beta, params.gamma);
    let u = input.sample(grid);
    let mass = factor_named(&rom.m, "reduced mass matrix")?;
    let effective = &rom.m + &rom.d * (gamma * h) + &rom.k * (beta * h * h);
    let chol = factor_named(&effective, "Newmark effective matrix")?;

    let k = grid.len();
    let mut out = RomTrajectory {
        grid: *grid,
        xr: Mat::zeros(r, k),
        xdr: Mat::zeros(r, k),
        y: Mat::zeros(rom.n_outputs(), k),
        u,
    };
    let (mut x, mut v) = (x0.clone(), v0.clone());
    let mut a = mass.solve_vec(&(&rom.b * out.u.column(0) - &rom.d * &v - &rom.k * &x));
    let store = |out: &mut RomTrajectory, j: usize, x: &Vector, v: &Vector| -> Result<()> {
        if !x.iter().chain(v.iter()).all(|e| e.is_finite()) {
            return Err(Error::NonFinite(format!("reduced state at step {j}")));
        }
        out.xr.set_column(j, x);
        out.xdr.set_column(j, v);
        let y = &rom.cp * x + &rom.cv * v;
        out.y.set_column(j, &y);
        Ok(())
    };
    store(&mut out, 0, &x, &v)?;
    for j in 1..k {
        let x_pred = &x + &v * h + &a * (h * h * (0.5 - beta));
        let v_pred = &v + &a * (h * (1.0 - gamma));
        let rhs = &rom.b * out.u.column(j) - &rom.d * &v_pred - &rom.k * &x_pred;
        a = chol.solve_vec(&rhs);
        x = x_pred + &a * (beta * h * h);
        v = v_pred + &a * (gamma * h);
        store(&mut out, j, &x, &v)?;
    }
    Ok(out)
}

/// `(Vrᵀ x0, Vrᵀ v0)`.
pub fn initial_reduced_state(basis: &PodBasis, x0: &Vector, v0: &Vector) -> Result<(Vector, Vector)> {
    let n = basis.dim();
    if x0.len() != n || v0.len() != n {
        return Err(Error::dim("full initial state", n, x0.len().max(v0.len())));
    }
    let vt = basis.vr.transpose();
    Ok((&vt * x0, &vt * v0))
}
