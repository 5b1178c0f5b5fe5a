//! Non-intrusive inference of structured reduced operators.
//!
//! The dynamics fit is
//!
//! ```text
//! min ‖M Ẍr + D Ẋr + K Xr − B U‖²_F   s.t.  M, D, K ⪰ 0,  tr M = τ
//! ```
//!
//! The objective is invariant under `(M, D, K, B) → c·(M, D, K, B)` up to the
//! factor `c²`, so without the trace condition the zero operators are always a
//! minimizer. Fixing `tr M = τ` selects one representative; every choice of
//! `τ > 0` yields the same reduced dynamics.

mod output;
mod solver;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{min_eigenvalue, Mat};
use crate::podspace::{CompressedData, PodBasis};
use crate::models::SecondOrderDAE;
use crate::{fsutil, mtx};

pub use output::{infer_output, OutputFit};
pub use solver::infer_dynamics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Inferred,
    Intrusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// ADMM with a facial-reduction polish.
    #[default]
    Admm,
    /// Projected gradient with step `1/L`; the objective never increases.
    ProjectedGradient,
}

/// Which reduced state terms enter the output fit `Y ≈ Cp Xr + Cv Ẋr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTerms {
    #[default]
    Both,
    Position,
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferOptions {
    pub max_iters: usize,
    pub kkt_tol: f64,
    /// Relative to the squared Frobenius norm of the (scaled) regression data.
    pub ridge: f64,
    pub mass_floor: f64,
    pub column_scaling: bool,
    /// `tr M`; defaults to `r`.
    pub mass_trace: Option<f64>,
    pub solver: SolverMode,
    pub output_terms: OutputTerms,
    /// Iterated-Tikhonov passes that remove the ridge bias.
    pub refinements: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            kkt_tol: 1e-8,
            ridge: 1e-10,
            mass_floor: 1e-8,
            column_scaling: true,
            mass_trace: None,
            solver: SolverMode::Admm,
            output_terms: OutputTerms::Both,
            refinements: 3,
        }
    }
}

impl InferOptions {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be nonnegative and finite, got {v}")))
            }
        };
        nonneg("kkt_tol", self.kkt_tol)?;
        nonneg("ridge", self.ridge)?;
        nonneg("mass_floor", self.mass_floor)?;
        if let Some(tau) = self.mass_trace {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidArgument(format!("mass_trace must be positive, got {tau}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn mass_trace_for(&self, r: usize) -> f64 {
        self.mass_trace.unwrap_or(r as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Polished,
    MaxIterations,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::Polished => "converged with face polish",
            Termination::MaxIterations => "iteration limit reached",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: SolverMode,
    /// `θᵀHθ + λ‖θ − c‖²` at the feasible iterates, in scaled coordinates; the
    /// last entries belong to the refinement passes.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// `‖θ − Π(θ − ∇φ(θ))‖` at the returned point.
    pub natural_residual: f64,
    pub tolerance: f64,
    pub initial_gradient_norm: f64,
    /// Minimum eigenvalues of the returned `(M, D, K)`.
    pub min_eigenvalues: [f64; 3],
    /// Frobenius norms used to scale `(Ẍr, Ẋr, Xr, U)`.
    pub column_scales: [f64; 4],
    pub ridge_weight: f64,
    pub mass_trace: f64,
    pub mass_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub dynamics_objective: Option<f64>,
    pub output_residual: Option<f64>,
    pub min_eigenvalues: [f64; 3],
    pub solve: Option<SolveReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub m: Mat,
    pub d: Mat,
    pub k: Mat,
    pub b: Mat,
    pub cp: Mat,
    pub cv: Mat,
    pub provenance: Provenance,
    pub diagnostics: ModelDiagnostics,
}

impl ReducedModel {
    pub fn r(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.cp.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.r();
        for (name, s) in [("Mr", &self.m), ("Dr", &self.d), ("Kr", &self.k)] {
            if s.shape() != (r, r) {
                return Err(Error::dim(name, format!("{r}x{r}"), format!("{}x{}", s.nrows(), s.ncols())));
            }
        }
        if self.b.nrows() != r || self.cp.ncols() != r || self.cv.ncols() != r || self.cp.nrows() != self.cv.nrows() {
            return Err(Error::dim("reduced input/output operators", r, self.b.nrows()));
        }
        for (name, m) in [("Mr", &self.m), ("Dr", &self.d), ("Kr", &self.k), ("Br", &self.b), ("Cpr", &self.cp), ("Cvr", &self.cv)] {
            crate::numkernel::ensure_finite(m, name)?;
        }
        Ok(())
    }

    pub fn min_eigenvalues(&self) -> Result<[f64; 3]> {
        Ok([min_eigenvalue(&self.m)?, min_eigenvalue(&self.d)?, min_eigenvalue(&self.k)?])
    }

    /// The same dynamics rescaled so that `tr M = tau`.
    pub fn gauge_aligned(&self, tau: f64) -> ReducedModel {
        let c = tau / self.m.trace();
        ReducedModel {
            m: &self.m * c,
            d: &self.d * c,
            k: &self.k * c,
            b: &self.b * c,
            ..self.clone()
        }
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        mtx::write_array(&dir.join("Mr.mtx"), &self.m)?;
        mtx::write_array(&dir.join("Dr.mtx"), &self.d)?;
        mtx::write_array(&dir.join("Kr.mtx"), &self.k)?;
        mtx::write_array(&dir.join("Br.mtx"), &self.b)?;
        mtx::write_array(&dir.join("Cpr.mtx"), &self.cp)?;
        mtx::write_array(&dir.join("Cvr.mtx"), &self.cv)?;
        fsutil::write_json(
            &dir.join("rom.json"),
            &RomMeta {
                r: self.r(),
                provenance: self.provenance,
                diagnostics: self.diagnostics.clone(),
            },
        )
    }

    pub fn read_dir(dir: &Path) -> Result<ReducedModel> {
        let meta_path = dir.join("rom.json");
        if !meta_path.is_file() {
            return Err(Error::MissingArtifact {
                what: "reduced model".into(),
                path: dir.to_path_buf(),
            });
        }
        let meta: RomMeta = fsutil::read_json(&meta_path)?;
        let rom = ReducedModel {
            m: mtx::read(&dir.join("Mr.mtx"))?,
            d: mtx::read(&dir.join("Dr.mtx"))?,
            k: mtx::read(&dir.join("Kr.mtx"))?,
            b: mtx::read(&dir.join("Br.mtx"))?,
            cp: mtx::read(&dir.join("Cpr.mtx"))?,
            cv: mtx::read(&dir.join("Cvr.mtx"))?,
            provenance: meta.provenance,
            diagnostics: meta.diagnostics,
        };
        if rom.r() != meta.r {
            return Err(Error::dim("reduced order", meta.r, rom.r()));
        }
        rom.validate()?;
        Ok(rom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RomMeta {
    r: usize,
    provenance: Provenance,
    diagnostics: ModelDiagnostics,
}

/// `‖M Ẍr + D Ẋr + K Xr − B U‖²_F`.
pub fn dynamics_objective(data: &CompressedData, m: &Mat, d: &Mat, k: &Mat, b: &Mat) -> f64 {
    (m * &data.xddr + d * &data.xdr + k * &data.xr - b * &data.u).norm_squared()
}

pub fn model_objective(data: &CompressedData, rom: &ReducedModel) -> f64 {
    dynamics_objective(data, &rom.m, &rom.d, &rom.k, &rom.b)
}

/// Galerkin projection of the full-order operators onto the basis.
pub fn intrusive_reduce(sys: &SecondOrderDAE, basis: &PodBasis) -> Result<ReducedModel> {
    let v = &basis.vr;
    if v.nrows() != sys.dim() {
        return Err(Error::dim("basis rows", sys.dim(), v.nrows()));
    }
    let vt = v.transpose();
    let congruence = |a: &Mat| crate::numkernel::symmetrize(&(&vt * a * v));
    let mut rom = ReducedModel {
        m: congruence(&sys.m),
        d: congruence(&sys.d),
        k: congruence(&sys.k),
        b: &vt * &sys.b,
        cp: &sys.cp * v,
        cv: &sys.cv * v,
        provenance: Provenance::Intrusive,
        diagnostics: ModelDiagnostics::default(),
    };
    rom.diagnostics.min_eigenvalues = rom.min_eigenvalues()?;
    Ok(rom)
}
