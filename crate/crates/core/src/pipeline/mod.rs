//! Experiment orchestration: simulate → pod → infer → rom → compare, plus the
//! intrusive oracle. Every stage reads its inputs from the artifact directory
//! and writes its outputs atomically, so stages can be rerun independently.
//!
//! ```text
//! <out>/config.json
//! <out>/system/                 M, D, K, B, Cp, Cv, Gp|Gv (.mtx)
//! <out>/simulate/{train,test}/  X, Xd, Xdd, U, Y, Lambda (.mtx), snapshots.json, trajectory.csv
//! <out>/pod/                    Vr.mtx, pod.json, spectrum*.csv, check.json
//! <out>/infer/                  Mr, Dr, Kr, Br, Cpr, Cvr (.mtx), rom.json
//! <out>/rom/{train,test}/       Xr.mtx, Y.mtx, trajectory.csv
//! <out>/oracle/                 intrusive/ (reduced model), oracle.json
//! <out>/report/                 CSV bundle, plots.gp, summary.json
//! ```

mod config;

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use config::{DerivativeSource, Horizon, ModelSpec, PipelineConfig};

use crate::analysis::{write_report, Comparison, ErrorSummary, ReportSummary, SolverSummary, SUMMARY_SCHEMA_VERSION};
use crate::daesolve::{consistent_initialize, newmark_dae_from, InputSignal, SnapshotSet, TimeGrid};
use crate::error::{Error, Result};
use crate::models::{load_system, save_system, SecondOrderDAE};
use crate::numkernel::{Mat, Vector};
use crate::opinf::{infer_dynamics, infer_output, intrusive_reduce, model_objective, ReducedModel};
use crate::podspace::{basis_from_matrix, build_basis_with, compress, constraint_compatibility, spectrum_csv, CompressedData, PodBasis, PodSource, TruncationRule};
use crate::romsolve::{newmark_ode, RomTrajectory};
use crate::{fsutil, mtx};

/// Largest accepted `‖G Vr‖_F / ‖G‖_F` before inference.
pub const COMPATIBILITY_TOL: f64 = 1e-8;
pub const THREADS_ENV: &str = "OPINF_DAE_THREADS";

const CASES: [&str; 2] = ["train", "test"];

/// Worker cap from `OPINF_DAE_THREADS`, defaulting to the available parallelism.
pub fn worker_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Apply `f` to every item on at most `threads` scoped workers, keeping order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("pipeline worker panicked"))
            .collect()
    })
}

/// Number of steps up to the last time `‖y(t)‖ ≥ fraction · max ‖y‖`.
pub fn fade_steps(y: &Mat, fraction: f64) -> usize {
    let norms: Vec<f64> = y.column_iter().map(|c| c.norm()).collect();
    let peak = norms.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return norms.len().saturating_sub(1);
    }
    norms.iter().rposition(|&v| v >= fraction * peak).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn system(&self) -> PathBuf {
        self.root.join("system")
    }

    pub fn snapshots(&self, case: &str) -> PathBuf {
        self.root.join("simulate").join(case)
    }

    pub fn pod(&self) -> PathBuf {
        self.root.join("pod")
    }

    pub fn inferred(&self) -> PathBuf {
        self.root.join("infer")
    }

    pub fn rom(&self, case: &str) -> PathBuf {
        self.root.join("rom").join(case)
    }

    pub fn oracle(&self) -> PathBuf {
        self.root.join("oracle")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }

    fn require(&self, path: PathBuf, marker: &str, what: &str) -> Result<PathBuf> {
        if path.join(marker).is_file() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact {
                what: what.into(),
                path,
            })
        }
    }

    pub fn load_system(&self) -> Result<SecondOrderDAE> {
        self.require(self.system(), "M.mtx", "system matrices")?;
        load_system(&self.system())
    }

    pub fn load_snapshots(&self, case: &str) -> Result<SnapshotSet> {
        SnapshotSet::read_dir(&self.require(self.snapshots(case), "snapshots.json", &format!("{case} snapshots"))?)
    }

    pub fn load_basis(&self) -> Result<PodBasis> {
        PodBasis::read_dir(&self.require(self.pod(), "pod.json", "POD basis")?)
    }

    pub fn load_inferred(&self) -> Result<ReducedModel> {
        ReducedModel::read_dir(&self.require(self.inferred(), "rom.json", "reduced model")?)
    }

    pub fn load_rom_output(&self, case: &str) -> Result<Mat> {
        mtx::read(&self.require(self.rom(case), "Y.mtx", &format!("{case} ROM trajectory"))?.join("Y.mtx"))
    }
}

fn signal<'a>(cfg: &'a PipelineConfig, case: &str) -> &'a InputSignal {
    if case == "train" {
        &cfg.training_signal
    } else {
        &cfg.test_signal
    }
}

fn simulate_case(cfg: &PipelineConfig, sys: &SecondOrderDAE, case: &str) -> Result<SnapshotSet> {
    let (grid, input) = if case == "train" {
        (cfg.grid, &cfg.training_signal)
    } else {
        (cfg.test_grid(), &cfg.test_signal)
    };
    let n = sys.dim();
    let init = consistent_initialize(sys, &Vector::zeros(n), &Vector::zeros(n), &input.eval(grid.t0))?;
    let snaps = newmark_dae_from(sys, &grid, input, &cfg.newmark, &init, &cfg.dae)?;
    if case != "train" {
        return Ok(snaps);
    }
    match cfg.horizon {
        Horizon::Full => Ok(snaps),
        Horizon::Fade { fraction } => {
            let steps = fade_steps(&snaps.y, fraction).max(grid.steps / 10).max(1);
            info!("training horizon cut at t = {} ({} of {} steps)", grid.time(steps), steps, grid.steps);
            Ok(snaps.truncated(steps))
        }
    }
}

pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<()> {
    let art = Artifacts::new(&cfg.output_dir);
    fsutil::write_json(&art.root().join("config.json"), cfg)?;
    let sys = cfg.model.build()?;
    save_system(&sys, &art.system())?;
    let threads = worker_threads()?;
    let runs = parallel_map(&CASES, threads, |case| simulate_case(cfg, &sys, case));
    for (case, snaps) in CASES.iter().zip(runs) {
        let snaps = snaps?;
        info!(
            "{case}: {} snapshots, max constraint residual {:e}, hidden drift {:e}",
            snaps.len(),
            snaps.diagnostics.max_constraint_residual,
            snaps.diagnostics.max_hidden_drift
        );
        snaps.write_dir(&art.snapshots(case))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodCheck {
    pub r: usize,
    pub rank: usize,
    pub constraint_compatibility: f64,
    pub tolerance: f64,
}

pub fn cmd_pod(cfg: &PipelineConfig) -> Result<()> {
    let art = Artifacts::new(&cfg.output_dir);
    let sys = art.load_system()?;
    let snaps = art.load_snapshots("train")?;
    let basis = build_basis_with(&snaps, sys.constraint_kind(), &cfg.truncation, &cfg.pod)?;
    let compat = constraint_compatibility(&sys, &basis)?;
    info!("POD: r = {} of numerical rank {}, ‖G Vr‖/‖G‖ = {compat:e}", basis.r(), basis.rank);
    if compat > COMPATIBILITY_TOL {
        warn!("POD basis leaves the constraint manifold (compatibility {compat:e})");
    }
    basis.write_dir(&art.pod())?;
    // Both spectra are exported regardless of which one selected the basis.
    for (source, data) in [(PodSource::Displacement, &snaps.x), (PodSource::Velocity, &snaps.xd)] {
        let (sigma, energy) = if source == basis.source {
            (basis.singular_values.clone(), basis.cum_energy.clone())
        } else {
            match basis_from_matrix(data, source, &TruncationRule::FixedR { r: 1 }, &cfg.pod) {
                Ok(b) => (b.singular_values, b.cum_energy),
                Err(e) => {
                    warn!("no {} spectrum: {e}", source_name(source));
                    continue;
                }
            }
        };
        fsutil::write_atomic(
            &art.pod().join(format!("spectrum_{}.csv", source_name(source))),
            spectrum_csv(&sigma, &energy).as_bytes(),
        )?;
    }
    fsutil::write_json(
        &art.pod().join("check.json"),
        &PodCheck {
            r: basis.r(),
            rank: basis.rank,
            constraint_compatibility: compat,
            tolerance: COMPATIBILITY_TOL,
        },
    )
}

fn source_name(source: PodSource) -> &'static str {
    match source {
        PodSource::Displacement => "displacement",
        PodSource::Velocity => "velocity",
    }
}

fn training_data(cfg: &PipelineConfig, art: &Artifacts, basis: &PodBasis) -> Result<CompressedData> {
    let snaps = art.load_snapshots("train")?;
    let snaps = match cfg.derivatives {
        DerivativeSource::Integrator => snaps,
        DerivativeSource::FiniteDifference => snaps.with_finite_difference_derivatives()?,
    };
    compress(&snaps, basis)
}

pub fn cmd_infer(cfg: &PipelineConfig) -> Result<()> {
    let art = Artifacts::new(&cfg.output_dir);
    let sys = art.load_system()?;
    let basis = art.load_basis()?;
    let compat = constraint_compatibility(&sys, &basis)?;
    if compat > COMPATIBILITY_TOL {
        return Err(Error::Invariant(format!(
            "constraint compatibility ‖G Vr‖/‖G‖ = {compat:e} exceeds {COMPATIBILITY_TOL:e}; \
             the basis does not respect the constraints, inference aborted"
        )));
    }
    let data = training_data(cfg, &art, &basis)?;
    let mut rom = infer_dynamics(&data, &cfg.infer)?;
    let fit = infer_output(&data, cfg.infer.output_terms)?;
    rom.cp = fit.cp;
    rom.cv = fit.cv;
    rom.diagnostics.output_residual = Some(fit.residual);
    if let Some(rep) = &rom.diagnostics.solve {
        info!(
            "inference: {} after {} iterations, natural residual {:e}, min eigenvalues {:?}",
            rep.termination, rep.iterations, rep.natural_residual, rep.min_eigenvalues
        );
    }
    rom.write_dir(&art.inferred())
}

fn rom_case(cfg: &PipelineConfig, rom: &ReducedModel, grid: &TimeGrid, case: &str) -> Result<RomTrajectory> {
    let z = Vector::zeros(rom.r());
    newmark_ode(rom, grid, signal(cfg, case), &cfg.newmark, &z, &z)
}

/// Grids of the stored full-order runs.
fn case_grids(art: &Artifacts) -> Result<Vec<TimeGrid>> {
    CASES
        .iter()
        .map(|case| {
            let path = art.require(art.snapshots(case), "snapshots.json", &format!("{case} snapshots"))?;
            let meta: serde_json::Value = fsutil::read_json(&path.join("snapshots.json"))?;
            serde_json::from_value(meta["grid"].clone()).map_err(|e| Error::Parse {
                kind: "JSON",
                path: path.join("snapshots.json"),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn cmd_rom(cfg: &PipelineConfig) -> Result<()> {
    let art = Artifacts::new(&cfg.output_dir);
    let rom = art.load_inferred()?;
    let grids = case_grids(&art)?;
    for (case, grid) in CASES.iter().zip(&grids) {
        let traj = rom_case(cfg, &rom, grid, case)?;
        let dir = art.rom(case);
        mtx::write_array(&dir.join("Xr.mtx"), &traj.xr)?;
        mtx::write_array(&dir.join("Y.mtx"), &traj.y)?;
        traj.write_csv(&dir.join("trajectory.csv"))?;
    }
    Ok(())
}

/// Inferred and intrusive ROMs evaluated on the stored full-order runs.
struct Evaluation {
    sys: SecondOrderDAE,
    basis: PodBasis,
    inferred: ReducedModel,
    intrusive: ReducedModel,
    comparisons: Vec<Comparison>,
    objective_inferred: f64,
    objective_intrusive_aligned: f64,
    objective_intrusive_raw: f64,
    training: SnapshotSet,
}

impl Evaluation {
    fn max_error(&self, case: &str, label: &str) -> Option<f64> {
        self.comparisons
            .iter()
            .find(|c| c.case == case && c.label == label)
            .map(|c| c.series.max_eps)
    }
}

fn evaluate(cfg: &PipelineConfig) -> Result<Evaluation> {
    let art = Artifacts::new(&cfg.output_dir);
    let inferred = art.load_inferred()?;
    let sys = art.load_system()?;
    let basis = art.load_basis()?;
    let training = art.load_snapshots("train")?;
    let test = art.load_snapshots("test")?;
    let data = training_data(cfg, &art, &basis)?;
    let intrusive = intrusive_reduce(&sys, &basis)?;
    let aligned = intrusive.gauge_aligned(inferred.m.trace());
    let mut comparisons = Vec::new();
    for (case, fom) in CASES.iter().zip([&training, &test]) {
        let y_inferred = art.load_rom_output(case)?;
        comparisons.push(Comparison::new(case, "inferred", &fom.grid, &fom.y, &y_inferred)?);
        let traj = rom_case(cfg, &intrusive, &fom.grid, case)?;
        comparisons.push(Comparison::new(case, "intrusive", &fom.grid, &fom.y, &traj.y)?);
    }
    Ok(Evaluation {
        objective_inferred: model_objective(&data, &inferred),
        objective_intrusive_aligned: model_objective(&data, &aligned),
        objective_intrusive_raw: model_objective(&data, &intrusive),
        sys,
        basis,
        inferred,
        intrusive,
        comparisons,
        training,
    })
}

pub fn cmd_compare(cfg: &PipelineConfig) -> Result<ReportSummary> {
    let art = Artifacts::new(&cfg.output_dir);
    let ev = evaluate(cfg)?;
    let solver = ev.inferred.diagnostics.solve.as_ref().map(|rep| SolverSummary {
        iterations: rep.iterations,
        termination: rep.termination.to_string(),
        natural_residual: rep.natural_residual,
        tolerance: rep.tolerance,
        min_eigenvalues: rep.min_eigenvalues,
        column_scales: rep.column_scales,
        ridge_weight: rep.ridge_weight,
        mass_trace: rep.mass_trace,
        mass_shift: rep.mass_shift,
    });
    let summary = ReportSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        model: cfg.model.name(),
        n: ev.sys.dim(),
        r: ev.basis.r(),
        training_steps: ev.training.grid.steps,
        max_constraint_residual: ev.training.diagnostics.max_constraint_residual,
        max_hidden_drift: ev.training.diagnostics.max_hidden_drift,
        constraint_compatibility: constraint_compatibility(&ev.sys, &ev.basis)?,
        max_training_error: ev.max_error("train", "inferred"),
        max_test_error: ev.max_error("test", "inferred"),
        errors: ev
            .comparisons
            .iter()
            .map(|c| ErrorSummary {
                case: c.case.clone(),
                label: c.label.clone(),
                max_eps: c.series.max_eps,
            })
            .collect(),
        objective_inferred: Some(ev.objective_inferred),
        objective_intrusive: Some(ev.objective_intrusive_aligned),
        solver,
    };
    let spectra = vec![(
        source_name(ev.basis.source).to_owned(),
        ev.basis.singular_values.clone(),
        ev.basis.cum_energy.clone(),
    )];
    write_report(&art.report(), &spectra, &ev.comparisons, &summary)?;
    info!(
        "max training error {:e}, max test error {:e}",
        summary.max_training_error.unwrap_or(f64::NAN),
        summary.max_test_error.unwrap_or(f64::NAN)
    );
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub objective: f64,
    pub max_training_error: f64,
    pub max_test_error: f64,
    pub min_eigenvalues: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub r: usize,
    pub inferred: OracleRow,
    /// Galerkin operators rescaled to the inferred `tr M`; same dynamics.
    pub intrusive: OracleRow,
    /// Objective at the unscaled Galerkin operators.
    pub intrusive_objective_unscaled: f64,
    pub mass_trace: f64,
}

pub fn cmd_oracle(cfg: &PipelineConfig) -> Result<OracleReport> {
    let art = Artifacts::new(&cfg.output_dir);
    let ev = evaluate(cfg)?;
    ev.intrusive.write_dir(&art.oracle().join("intrusive"))?;
    let row = |rom: &ReducedModel, label: &str, objective: f64| -> Result<OracleRow> {
        Ok(OracleRow {
            objective,
            max_training_error: ev.max_error("train", label).unwrap_or(f64::NAN),
            max_test_error: ev.max_error("test", label).unwrap_or(f64::NAN),
            min_eigenvalues: rom.min_eigenvalues()?,
        })
    };
    let report = OracleReport {
        r: ev.basis.r(),
        inferred: row(&ev.inferred, "inferred", ev.objective_inferred)?,
        intrusive: row(&ev.intrusive, "intrusive", ev.objective_intrusive_aligned)?,
        intrusive_objective_unscaled: ev.objective_intrusive_raw,
        mass_trace: ev.inferred.m.trace(),
    };
    fsutil::write_json(&art.oracle().join("oracle.json"), &report)?;
    Ok(report)
}

pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<ReportSummary> {
    cmd_simulate(cfg)?;
    cmd_pod(cfg)?;
    cmd_infer(cfg)?;
    cmd_rom(cfg)?;
    let summary = cmd_compare(cfg)?;
    cmd_oracle(cfg)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fade_cut_after_last_large_value() {
        let y = Mat::from_row_slice(1, 6, &[0.0, 1.0, 0.5, 0.02, 0.005, 0.001]);
        assert_eq!(fade_steps(&y, 0.01), 3);
        assert_eq!(fade_steps(&Mat::zeros(1, 4), 0.01), 3);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..10).collect();
        assert_eq!(parallel_map(&items, 3, |x| x * 2), (0..10).map(|x| x * 2).collect::<Vec<_>>());
        assert_eq!(parallel_map(&items, 1, |x| x + 1)[9], 10);
    }
}
