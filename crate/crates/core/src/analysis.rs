//! Output error metric and the report bundle.
//!
//! Report files (all CSV with a header row, values in `{:.16e}`):
//!
//! | file                          | columns                                    |
//! |-------------------------------|--------------------------------------------|
//! | `spectrum_<source>.csv`       | `index,sigma,cum_energy`                   |
//! | `outputs_<case>_<label>.csv`  | `t,y_1,yhat_1,...,y_p,yhat_p`              |
//! | `error_<case>_<label>.csv`    | `t,eps_y`                                  |
//!
//! `summary.json` follows [`ReportSummary`], versioned by `schema_version`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::daesolve::TimeGrid;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::numkernel::Mat;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub eps_y: Vec<f64>,
    pub max_eps: f64,
    /// `max_t ‖y(t)‖²`.
    pub normalization: f64,
}

/// `ε(t_i) = ‖y(t_i) − ŷ(t_i)‖² / max_t ‖y(t)‖²`.
pub fn relative_error(grid: &TimeGrid, y_fom: &Mat, y_rom: &Mat) -> Result<ErrorSeries> {
    if y_fom.shape() != y_rom.shape() {
        return Err(Error::dim(
            "output trajectories",
            format!("{}x{}", y_fom.nrows(), y_fom.ncols()),
            format!("{}x{}", y_rom.nrows(), y_rom.ncols()),
        ));
    }
    if y_fom.ncols() != grid.len() {
        return Err(Error::dim("output trajectory columns", grid.len(), y_fom.ncols()));
    }
    let normalization = y_fom.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
    if !(normalization > 0.0) {
        return Err(Error::ZeroReference);
    }
    let eps_y: Vec<f64> = y_fom
        .column_iter()
        .zip(y_rom.column_iter())
        .map(|(a, b)| (a - b).norm_squared() / normalization)
        .collect();
    let max_eps = eps_y.iter().copied().fold(0.0, f64::max);
    Ok(ErrorSeries {
        times: grid.times(),
        eps_y,
        max_eps,
        normalization,
    })
}

pub fn error_csv(series: &ErrorSeries) -> String {
    let mut out = String::from("t,eps_y\n");
    for (t, e) in series.times.iter().zip(&series.eps_y) {
        let _ = writeln!(out, "{t:.16e},{e:.16e}");
    }
    out
}

pub fn comparison_csv(grid: &TimeGrid, y_fom: &Mat, y_rom: &Mat) -> String {
    let mut out = String::from("t");
    for i in 1..=y_fom.nrows() {
        let _ = write!(out, ",y_{i},yhat_{i}");
    }
    out.push('\n');
    for j in 0..y_fom.ncols() {
        let _ = write!(out, "{:.16e}", grid.time(j));
        for i in 0..y_fom.nrows() {
            let _ = write!(out, ",{:.16e},{:.16e}", y_fom[(i, j)], y_rom[(i, j)]);
        }
        out.push('\n');
    }
    out
}

/// One ROM-vs-FOM comparison, e.g. `("test", "inferred")`.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub case: String,
    pub label: String,
    pub grid: TimeGrid,
    pub y_fom: Mat,
    pub y_rom: Mat,
    pub series: ErrorSeries,
}

impl Comparison {
    pub fn new(case: &str, label: &str, grid: &TimeGrid, y_fom: &Mat, y_rom: &Mat) -> Result<Self> {
        Ok(Self {
            case: case.into(),
            label: label.into(),
            grid: *grid,
            series: relative_error(grid, y_fom, y_rom)?,
            y_fom: y_fom.clone(),
            y_rom: y_rom.clone(),
        })
    }

    fn stem(&self) -> String {
        format!("{}_{}", self.case, self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub case: String,
    pub label: String,
    pub max_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub termination: String,
    pub natural_residual: f64,
    pub tolerance: f64,
    pub min_eigenvalues: [f64; 3],
    pub column_scales: [f64; 4],
    pub ridge_weight: f64,
    pub mass_trace: f64,
    pub mass_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub schema_version: u32,
    pub model: String,
    pub n: usize,
    pub r: usize,
    pub training_steps: usize,
    pub max_constraint_residual: f64,
    pub max_hidden_drift: f64,
    pub constraint_compatibility: f64,
    pub max_training_error: Option<f64>,
    pub max_test_error: Option<f64>,
    pub errors: Vec<ErrorSummary>,
    /// Dynamics objective at the inferred operators.
    pub objective_inferred: Option<f64>,
    /// Dynamics objective at the Galerkin operators rescaled to the inferred `tr M`.
    pub objective_intrusive: Option<f64>,
    pub solver: Option<SolverSummary>,
}

/// Gnuplot script plotting every CSV of the bundle into PNG files.
pub fn gnuplot_script(spectra: &[String], comparisons: &[Comparison]) -> String {
    let mut out = String::from("set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n");
    for name in spectra {
        let _ = writeln!(
            out,
            "set output 'spectrum_{name}.png'\nset logscale y\nplot 'spectrum_{name}.csv' using 1:2 with linespoints\nunset logscale y"
        );
    }
    for c in comparisons {
        let stem = c.stem();
        let _ = write!(out, "set output 'outputs_{stem}.png'\nplot ");
        let curves: Vec<String> = (0..c.y_fom.nrows())
            .flat_map(|i| {
                [
                    format!("'outputs_{stem}.csv' using 1:{} with lines", 2 + 2 * i),
                    format!("'outputs_{stem}.csv' using 1:{} with lines dt 2", 3 + 2 * i),
                ]
            })
            .collect();
        let _ = writeln!(out, "{}", curves.join(", "));
        let _ = writeln!(
            out,
            "set output 'error_{stem}.png'\nset logscale y\nplot 'error_{stem}.csv' using 1:2 with lines\nunset logscale y"
        );
    }
    out
}

/// Write the report bundle into `dir`.
pub fn write_report(
    dir: &Path,
    spectra: &[(String, Vec<f64>, Vec<f64>)],
    comparisons: &[Comparison],
    summary: &ReportSummary,
) -> Result<()> {
    for (name, sigma, energy) in spectra {
        fsutil::write_atomic(
            &dir.join(format!("spectrum_{name}.csv")),
            crate::podspace::spectrum_csv(sigma, energy).as_bytes(),
        )?;
    }
    for c in comparisons {
        let stem = c.stem();
        fsutil::write_atomic(&dir.join(format!("outputs_{stem}.csv")), comparison_csv(&c.grid, &c.y_fom, &c.y_rom).as_bytes())?;
        fsutil::write_atomic(&dir.join(format!("error_{stem}.csv")), error_csv(&c.series).as_bytes())?;
    }
    let names: Vec<String> = spectra.iter().map(|s| s.0.clone()).collect();
    fsutil::write_atomic(&dir.join("plots.gp"), gnuplot_script(&names, comparisons).as_bytes())?;
    fsutil::write_json(&dir.join("summary.json"), summary)
}
