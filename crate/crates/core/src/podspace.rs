//! Proper orthogonal decomposition of the snapshot data.
//!
//! The basis is taken from displacements for position constraints and from
//! velocities for velocity constraints, so that every basis vector lies in the
//! kernel of the constraint Jacobian whenever the snapshots do.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::daesolve::SnapshotSet;
use crate::error::{Error, Result};
use crate::models::{ConstraintKind, SecondOrderDAE};
use crate::numkernel::{numerical_rank, thin_svd, Mat};
use crate::{fsutil, mtx};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruncationRule {
    FixedR { r: usize },
    /// Smallest `r` with `E[r−1] ≥ tau`.
    EnergyThreshold { tau: f64 },
    /// Smallest `r = i + 1` with `E[i + window] − E[i] < eps`.
    EnergySaturation { window: usize, eps: f64 },
}

impl Default for TruncationRule {
    fn default() -> Self {
        TruncationRule::EnergySaturation {
            window: 5,
            eps: 1e-6,
        }
    }
}

impl TruncationRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TruncationRule::FixedR { r } if r == 0 => Err(Error::InvalidArgument("fixed_r needs r ≥ 1".into())),
            TruncationRule::EnergyThreshold { tau } if !(tau > 0.0 && tau <= 1.0) => {
                Err(Error::InvalidArgument(format!("energy threshold tau must lie in (0, 1], got {tau}")))
            }
            TruncationRule::EnergySaturation { window, eps } if window == 0 || !(eps > 0.0) => Err(
                Error::InvalidArgument(format!("energy saturation needs window ≥ 1 and eps > 0, got ({window}, {eps})")),
            ),
            _ => Ok(()),
        }
    }

    /// Reduced order selected from the cumulative energy `e`, before the rank check.
    pub fn select(&self, e: &[f64]) -> usize {
        if e.is_empty() {
            return 0;
        }
        let last = e.len() - 1;
        match *self {
            TruncationRule::FixedR { r } => r,
            TruncationRule::EnergyThreshold { tau } => e.iter().position(|&v| v >= tau).unwrap_or(last) + 1,
            TruncationRule::EnergySaturation { window, eps } => {
                (0..e.len()).find(|&i| e[(i + window).min(last)] - e[i] < eps).unwrap_or(last) + 1
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PodSource {
    Displacement,
    Velocity,
}

impl From<ConstraintKind> for PodSource {
    fn from(kind: ConstraintKind) -> Self {
        match kind {
            ConstraintKind::Position => PodSource::Displacement,
            ConstraintKind::Velocity => PodSource::Velocity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PodOptions {
    /// Subtract the temporal mean before the SVD. Only the basis is affected;
    /// `compress` always projects the raw snapshots.
    pub centering: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub vr: Mat,
    pub singular_values: Vec<f64>,
    pub cum_energy: Vec<f64>,
    pub source: PodSource,
    pub rank: usize,
}

impl PodBasis {
    pub fn r(&self) -> usize {
        self.vr.ncols()
    }

    pub fn dim(&self) -> usize {
        self.vr.nrows()
    }
}

/// `E_i = Σ_{j≤i} σ_j / Σ_j σ_j` with the last entry pinned to 1.
pub fn cumulative_energy(s: &[f64]) -> Vec<f64> {
    let total: f64 = s.iter().sum();
    if s.is_empty() {
        return Vec::new();
    }
    if total <= 0.0 {
        return vec![1.0; s.len()];
    }
    let mut acc = 0.0;
    let mut e: Vec<f64> = s
        .iter()
        .map(|&v| {
            acc += v;
            (acc / total).min(1.0)
        })
        .collect();
    *e.last_mut().unwrap() = 1.0;
    e
}

pub fn build_basis(snaps: &SnapshotSet, kind: ConstraintKind, rule: &TruncationRule) -> Result<PodBasis> {
    build_basis_with(snaps, kind, rule, &PodOptions::default())
}

pub fn build_basis_with(snaps: &SnapshotSet, kind: ConstraintKind, rule: &TruncationRule, options: &PodOptions) -> Result<PodBasis> {
    let source = PodSource::from(kind);
    let data = match source {
        PodSource::Displacement => &snaps.x,
        PodSource::Velocity => &snaps.xd,
    };
    basis_from_matrix(data, source, rule, options)
}

pub fn basis_from_matrix(data: &Mat, source: PodSource, rule: &TruncationRule, options: &PodOptions) -> Result<PodBasis> {
    rule.validate()?;
    if data.ncols() < 2 {
        return Err(Error::InvalidArgument(format!("POD needs at least 2 snapshots, got {}", data.ncols())));
    }
    let centered;
    let data = if options.centering {
        let mean = data.column_mean();
        centered = Mat::from_fn(data.nrows(), data.ncols(), |i, j| data[(i, j)] - mean[i]);
        &centered
    } else {
        data
    };
    let svd = thin_svd(data)?;
    let rank = numerical_rank(&svd.s, data.nrows().max(data.ncols()) as f64 * f64::EPSILON);
    let cum_energy = cumulative_energy(&svd.s);
    let selected = rule.select(&cum_energy);
    let r = match rule {
        TruncationRule::FixedR { r } => *r,
        _ => selected.min(rank),
    };
    if r > rank || r == 0 {
        return Err(Error::RankTooSmall { requested: r.max(1), rank });
    }
    Ok(PodBasis {
        vr: svd.u.columns(0, r).into_owned(),
        singular_values: svd.s,
        cum_energy,
        source,
        rank,
    })
}

/// `‖G V_r‖_F / ‖G‖_F`, zero for an empty Jacobian.
pub fn constraint_compatibility(sys: &SecondOrderDAE, basis: &PodBasis) -> Result<f64> {
    let g = sys.jacobian();
    if g.ncols() != basis.dim() {
        return Err(Error::dim("basis rows", g.ncols(), basis.dim()));
    }
    let norm = g.norm();
    if g.nrows() == 0 || norm == 0.0 {
        return Ok(0.0);
    }
    Ok((g * &basis.vr).norm() / norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedData {
    pub xr: Mat,
    pub xdr: Mat,
    pub xddr: Mat,
    pub u: Mat,
    pub y: Mat,
}

impl CompressedData {
    pub fn r(&self) -> usize {
        self.xr.nrows()
    }

    pub fn len(&self) -> usize {
        self.xr.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.xr.ncols() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let (r, k) = self.xr.shape();
        for (name, m) in [("Xdr", &self.xdr), ("Xddr", &self.xddr)] {
            if m.shape() != (r, k) {
                return Err(Error::dim(format!("compressed {name}"), format!("{r}x{k}"), format!("{}x{}", m.nrows(), m.ncols())));
            }
        }
        for (name, m) in [("U", &self.u), ("Y", &self.y)] {
            if m.ncols() != k {
                return Err(Error::dim(format!("compressed {name} columns"), k, m.ncols()));
            }
        }
        for (name, m) in [("Xr", &self.xr), ("Xdr", &self.xdr), ("Xddr", &self.xddr), ("U", &self.u), ("Y", &self.y)] {
            crate::numkernel::ensure_finite(m, name)?;
        }
        Ok(())
    }
}

pub fn compress(snaps: &SnapshotSet, basis: &PodBasis) -> Result<CompressedData> {
    if snaps.x.nrows() != basis.dim() {
        return Err(Error::dim("snapshot rows", basis.dim(), snaps.x.nrows()));
    }
    let vt = basis.vr.transpose();
    Ok(CompressedData {
        xr: &vt * &snaps.x,
        xdr: &vt * &snaps.xd,
        xddr: &vt * &snaps.xdd,
        u: snaps.u.clone(),
        y: snaps.y.clone(),
    })
}

/// `index,sigma,cum_energy` with a 1-based index.
pub fn spectrum_csv(singular_values: &[f64], cum_energy: &[f64]) -> String {
    let mut out = String::from("index,sigma,cum_energy\n");
    for (i, (s, e)) in singular_values.iter().zip(cum_energy).enumerate() {
        let _ = writeln!(out, "{},{s:.16e},{e:.16e}", i + 1);
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PodMeta {
    r: usize,
    rank: usize,
    source: PodSource,
    singular_values: Vec<f64>,
    cum_energy: Vec<f64>,
}

impl PodBasis {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        mtx::write_array(&dir.join("Vr.mtx"), &self.vr)?;
        fsutil::write_json(
            &dir.join("pod.json"),
            &PodMeta {
                r: self.r(),
                rank: self.rank,
                source: self.source,
                singular_values: self.singular_values.clone(),
                cum_energy: self.cum_energy.clone(),
            },
        )?;
        fsutil::write_atomic(&dir.join("spectrum.csv"), spectrum_csv(&self.singular_values, &self.cum_energy).as_bytes())
    }

    pub fn read_dir(dir: &Path) -> Result<PodBasis> {
        let meta_path = dir.join("pod.json");
        if !meta_path.is_file() {
            return Err(Error::MissingArtifact {
                what: "POD basis".into(),
                path: dir.to_path_buf(),
            });
        }
        let meta: PodMeta = fsutil::read_json(&meta_path)?;
        let vr = mtx::read(&dir.join("Vr.mtx"))?;
        if vr.ncols() != meta.r {
            return Err(Error::dim("Vr columns", meta.r, vr.ncols()));
        }
        Ok(PodBasis {
            vr,
            singular_values: meta.singular_values,
            cum_energy: meta.cum_energy,
            source: meta.source,
            rank: meta.rank,
        })
    }
}
