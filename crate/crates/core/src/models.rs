//! Full-order constrained second-order systems
//!
//! ```text
//! M ẍ + D ẋ + K x + Gᵀ λ = B u
//! G x = 0      (position constraint, index 3)   or   G ẋ = 0   (velocity constraint, index 2)
//! y = C_p x + C_v ẋ
//! ```
//!
//! plus builders for the two mass-spring-damper benchmarks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtx;
use crate::numkernel::{
    ensure_finite, is_positive_definite, min_eigenvalue, numerical_rank, symmetry_defect,
    thin_svd, Mat, SYMMETRY_TOL,
};

/// Absolute slack on the smallest eigenvalue of the damping matrix.
pub const DAMPING_PSD_SLACK: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Position,
    Velocity,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Position(Mat),
    Velocity(Mat),
}

impl Constraint {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            Constraint::Position(_) => ConstraintKind::Position,
            Constraint::Velocity(_) => ConstraintKind::Velocity,
        }
    }

    pub fn jacobian(&self) -> &Mat {
        match self {
            Constraint::Position(g) | Constraint::Velocity(g) => g,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderDAE {
    pub m: Mat,
    pub d: Mat,
    pub k: Mat,
    pub constraint: Constraint,
    pub b: Mat,
    pub cp: Mat,
    pub cv: Mat,
}

impl SecondOrderDAE {
    /// Assemble and validate every structural invariant.
    pub fn new(m: Mat, d: Mat, k: Mat, constraint: Constraint, b: Mat, cp: Mat, cv: Mat) -> Result<Self> {
        let sys = Self {
            m,
            d,
            k,
            constraint,
            b,
            cp,
            cv,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_constraints(&self) -> usize {
        self.jacobian().nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.cp.nrows()
    }

    pub fn jacobian(&self) -> &Mat {
        self.constraint.jacobian()
    }

    pub fn constraint_kind(&self) -> ConstraintKind {
        self.constraint.kind()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.m.nrows();
        let named = [
            ("M", &self.m),
            ("D", &self.d),
            ("K", &self.k),
            ("G", self.jacobian()),
            ("B", &self.b),
            ("Cp", &self.cp),
            ("Cv", &self.cv),
        ];
        for (name, mat) in named {
            ensure_finite(mat, name)?;
        }
        for (name, mat) in [("M", &self.m), ("D", &self.d), ("K", &self.k)] {
            if mat.shape() != (n, n) {
                return Err(Error::dim(name, format!("{n}x{n}"), fmt_shape(mat)));
            }
            let defect = symmetry_defect(mat);
            if defect > SYMMETRY_TOL {
                return Err(Error::Invariant(format!(
                    "{name} not symmetric (relative defect {defect:e})"
                )));
            }
        }
        if self.jacobian().ncols() != n {
            return Err(Error::dim("G columns", n, self.jacobian().ncols()));
        }
        if self.b.nrows() != n {
            return Err(Error::dim("B rows", n, self.b.nrows()));
        }
        if self.cp.ncols() != n || self.cv.ncols() != n {
            return Err(Error::dim("Cp/Cv columns", n, self.cp.ncols().max(self.cv.ncols())));
        }
        if self.cp.nrows() != self.cv.nrows() {
            return Err(Error::dim("Cv rows", self.cp.nrows(), self.cv.nrows()));
        }
        for (name, mat) in [("M", &self.m), ("K", &self.k)] {
            if !is_positive_definite(mat) {
                let lam = min_eigenvalue(&crate::numkernel::symmetrize(mat))?;
                return Err(Error::Invariant(format!(
                    "{name} not positive definite (min eigenvalue {lam:e})"
                )));
            }
        }
        let shift = DAMPING_PSD_SLACK * self.d.norm().max(1.0);
        let shifted = crate::numkernel::symmetrize(&self.d) + Mat::identity(n, n) * shift;
        if !is_positive_definite(&shifted) {
            let lam = min_eigenvalue(&crate::numkernel::symmetrize(&self.d))?;
            return Err(Error::Invariant(format!(
                "D not positive semidefinite (min eigenvalue {lam:e})"
            )));
        }
        let g = self.jacobian();
        if g.nrows() > 0 {
            let rank = if g.nrows() > g.ncols() {
                g.ncols()
            } else {
                numerical_rank(&thin_svd(g)?.s, RANK_TOL)
            };
            if rank < g.nrows() {
                return Err(Error::Invariant(format!(
                    "constraint Jacobian rank-deficient (rank {rank} < {} rows)",
                    g.nrows()
                )));
            }
        }
        Ok(())
    }
}

fn fmt_shape(m: &Mat) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

/// Which state derivative the sensor rows read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[default]
    Displacement,
    Velocity,
}

fn input_matrix(n: usize, nodes: &[usize]) -> Result<Mat> {
    let mut b = Mat::zeros(n, 1);
    for &i in nodes {
        if i >= n {
            return Err(Error::InvalidArgument(format!("input node {i} out of range (n = {n})")));
        }
        b[(i, 0)] = 1.0;
    }
    Ok(b)
}

fn output_matrices(n: usize, nodes: &[usize], measure: Measure) -> Result<(Mat, Mat)> {
    let mut sel = Mat::zeros(nodes.len(), n);
    for (row, &i) in nodes.iter().enumerate() {
        if i >= n {
            return Err(Error::InvalidArgument(format!("output node {i} out of range (n = {n})")));
        }
        sel[(row, i)] = 1.0;
    }
    let zero = Mat::zeros(nodes.len(), n);
    Ok(match measure {
        Measure::Displacement => (sel, zero),
        Measure::Velocity => (zero, sel),
    })
}

fn require_positive(values: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in values {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Chain of masses, each anchored to the ground by a spring and a damper and
/// coupled to its neighbours; the chain ends are spring/damper-attached to
/// walls and the two end masses are tied by a rigid bar (`x₁ = x_n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchoredChain {
    pub n_masses: usize,
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    /// Ground spring; defaults to `stiffness`.
    pub ground_stiffness: Option<f64>,
    /// Ground damper; defaults to `damping`.
    pub ground_damping: Option<f64>,
    /// Nodes driven by the single input; defaults to `[1]`.
    pub input_nodes: Option<Vec<usize>>,
    /// Sensor nodes; defaults to `[0, 2, n - 2]`, both sides of the rigid bar.
    pub output_nodes: Option<Vec<usize>>,
    pub measure: Measure,
}

impl Default for AnchoredChain {
    fn default() -> Self {
        Self {
            n_masses: 600,
            mass: 100.0,
            stiffness: 2.0,
            damping: 5.0,
            ground_stiffness: None,
            ground_damping: None,
            input_nodes: None,
            output_nodes: None,
            measure: Measure::Displacement,
        }
    }
}

impl AnchoredChain {
    pub fn build(&self) -> Result<SecondOrderDAE> {
        let n = self.n_masses;
        if n < 3 {
            return Err(Error::InvalidArgument(format!("anchored chain needs at least 3 masses, got {n}")));
        }
        let kg = self.ground_stiffness.unwrap_or(self.stiffness);
        let cg = self.ground_damping.unwrap_or(self.damping);
        require_positive(&[
            ("mass", self.mass),
            ("stiffness", self.stiffness),
            ("damping", self.damping),
            ("ground stiffness", kg),
            ("ground damping", cg),
        ])?;
        let tridiag = |c: f64, ground: f64| {
            Mat::from_fn(n, n, |i, j| {
                if i == j {
                    2.0 * c + ground
                } else if i.abs_diff(j) == 1 {
                    -c
                } else {
                    0.0
                }
            })
        };
        let m = Mat::identity(n, n) * self.mass;
        let k = tridiag(self.stiffness, kg);
        let d = tridiag(self.damping, cg);
        let mut g = Mat::zeros(1, n);
        g[(0, 0)] = 1.0;
        g[(0, n - 1)] = -1.0;
        let inputs = self.input_nodes.clone().unwrap_or_else(|| vec![1]);
        let outputs = self
            .output_nodes
            .clone()
            .unwrap_or_else(|| vec![0, 2, n - 2]);
        let b = input_matrix(n, &inputs)?;
        let (cp, cv) = output_matrices(n, &outputs, self.measure)?;
        SecondOrderDAE::new(m, d, k, Constraint::Position(g), b, cp, cv)
    }
}

pub fn build_anchored_chain(n_masses: usize, mass: f64, stiffness: f64, damping: f64) -> Result<SecondOrderDAE> {
    AnchoredChain {
        n_masses,
        mass,
        stiffness,
        damping,
        ..AnchoredChain::default()
    }
    .build()
}

/// Three wall-anchored chains of equal length whose far ends connect through
/// springs to one shared coupling mass (itself grounded by a spring). The
/// three chain end masses are constrained to move with equal velocity.
/// Damping is Rayleigh: `D = α M + β K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripleChain {
    pub chain_length: usize,
    pub mass: f64,
    pub stiffness: f64,
    pub damping_alpha: f64,
    pub damping_beta: f64,
    /// Nodes driven by the single input; defaults to one interior node per
    /// chain at staggered positions `c·L + (c+1)·L/4`.
    pub input_nodes: Option<Vec<usize>>,
    /// Sensor nodes; defaults to the middles of the first two chains and the
    /// coupling mass.
    pub output_nodes: Option<Vec<usize>>,
    pub measure: Measure,
}

impl Default for TripleChain {
    fn default() -> Self {
        Self {
            chain_length: 100,
            mass: 100.0,
            stiffness: 2.0,
            damping_alpha: 0.01,
            damping_beta: 0.01,
            input_nodes: None,
            output_nodes: None,
            measure: Measure::Displacement,
        }
    }
}

impl TripleChain {
    /// Index of the last mass of chain `c` (0, 1 or 2).
    pub fn endpoint(&self, c: usize) -> usize {
        c * self.chain_length + self.chain_length - 1
    }

    pub fn coupling_index(&self) -> usize {
        3 * self.chain_length
    }

    pub fn build(&self) -> Result<SecondOrderDAE> {
        let len = self.chain_length;
        if len < 2 {
            return Err(Error::InvalidArgument(format!("triple chain needs chain_length >= 2, got {len}")));
        }
        require_positive(&[("mass", self.mass), ("stiffness", self.stiffness)])?;
        if !(self.damping_alpha >= 0.0 && self.damping_beta >= 0.0) {
            return Err(Error::InvalidArgument("Rayleigh coefficients must be nonnegative".into()));
        }
        let n = 3 * len + 1;
        let hub = self.coupling_index();
        let kc = self.stiffness;
        let mut k = Mat::zeros(n, n);
        let mut spring = |i: usize, j: Option<usize>| {
            k[(i, i)] += kc;
            if let Some(j) = j {
                k[(j, j)] += kc;
                k[(i, j)] -= kc;
                k[(j, i)] -= kc;
            }
        };
        for c in 0..3 {
            let first = c * len;
            spring(first, None);
            for i in first..first + len - 1 {
                spring(i, Some(i + 1));
            }
            spring(first + len - 1, Some(hub));
        }
        spring(hub, None);
        let m = Mat::identity(n, n) * self.mass;
        let d = &m * self.damping_alpha + &k * self.damping_beta;
        let mut g = Mat::zeros(2, n);
        for row in 0..2 {
            g[(row, self.endpoint(row))] = 1.0;
            g[(row, self.endpoint(row + 1))] = -1.0;
        }
        let inputs = self
            .input_nodes
            .clone()
            .unwrap_or_else(|| (0..3).map(|c| c * len + (c + 1) * len / 4).collect());
        let outputs = self
            .output_nodes
            .clone()
            .unwrap_or_else(|| vec![len / 2, len + len / 2, hub]);
        let b = input_matrix(n, &inputs)?;
        let (cp, cv) = output_matrices(n, &outputs, self.measure)?;
        SecondOrderDAE::new(m, d, k, Constraint::Velocity(g), b, cp, cv)
    }
}

pub fn build_triple_chain(
    chain_length: usize,
    mass: f64,
    stiffness: f64,
    damping_alpha: f64,
    damping_beta: f64,
) -> Result<SecondOrderDAE> {
    TripleChain {
        chain_length,
        mass,
        stiffness,
        damping_alpha,
        damping_beta,
        ..TripleChain::default()
    }
    .build()
}

const SYSTEM_FILES: [&str; 6] = ["M.mtx", "D.mtx", "K.mtx", "B.mtx", "Cp.mtx", "Cv.mtx"];

/// Load a system from a directory of MatrixMarket files: `M D K B Cp Cv` plus
/// exactly one of `Gp` / `Gv`.
pub fn load_system(dir: &Path) -> Result<SecondOrderDAE> {
    let read = |name: &str| -> Result<Mat> {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                what: format!("system matrix {name}"),
                path,
            });
        }
        mtx::read(&path)
    };
    let mut mats: Vec<Mat> = Vec::with_capacity(6);
    for name in SYSTEM_FILES {
        mats.push(read(name)?);
    }
    let (gp, gv) = (dir.join("Gp.mtx"), dir.join("Gv.mtx"));
    let constraint = match (gp.is_file(), gv.is_file()) {
        (true, false) => Constraint::Position(mtx::read(&gp)?),
        (false, true) => Constraint::Velocity(mtx::read(&gv)?),
        (true, true) => {
            return Err(Error::Invariant(format!(
                "both Gp.mtx and Gv.mtx present in {}",
                dir.display()
            )))
        }
        (false, false) => {
            return Err(Error::MissingArtifact {
                what: "constraint Jacobian (Gp.mtx or Gv.mtx)".into(),
                path: dir.to_path_buf(),
            })
        }
    };
    let mut it = mats.into_iter();
    let mut next = || it.next().expect("six matrices read");
    let (m, d, k, b, cp, cv) = (next(), next(), next(), next(), next(), next());
    SecondOrderDAE::new(m, d, k, constraint, b, cp, cv)
}

pub fn save_system(sys: &SecondOrderDAE, dir: &Path) -> Result<()> {
    let mats = [&sys.m, &sys.d, &sys.k, &sys.b, &sys.cp, &sys.cv];
    for (name, mat) in SYSTEM_FILES.iter().zip(mats) {
        mtx::write_array(&dir.join(name), mat)?;
    }
    let (name, stale) = match sys.constraint_kind() {
        ConstraintKind::Position => ("Gp.mtx", "Gv.mtx"),
        ConstraintKind::Velocity => ("Gv.mtx", "Gp.mtx"),
    };
    let stale = dir.join(stale);
    if stale.exists() {
        std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    mtx::write_array(&dir.join(name), sys.jacobian())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchored_chain_three_masses_by_hand() {
        let sys = build_anchored_chain(3, 1.0, 1.0, 1.0).unwrap();
        let k = Mat::from_row_slice(3, 3, &[3.0, -1.0, 0.0, -1.0, 3.0, -1.0, 0.0, -1.0, 3.0]);
        assert_eq!(sys.k, k);
        assert_eq!(sys.d, k);
        assert_eq!(sys.m, Mat::identity(3, 3));
        assert_eq!(sys.jacobian(), &Mat::from_row_slice(1, 3, &[1.0, 0.0, -1.0]));
        assert_eq!(sys.constraint_kind(), ConstraintKind::Position);
        assert_eq!(sys.cv, Mat::zeros(3, 3));
    }

    #[test]
    fn anchored_chain_separate_ground_parameters() {
        let sys = AnchoredChain {
            n_masses: 3,
            mass: 2.0,
            stiffness: 1.5,
            damping: 0.5,
            ground_stiffness: Some(4.0),
            ground_damping: Some(0.25),
            ..Default::default()
        }
        .build()
        .unwrap();
        assert_eq!(sys.k[(1, 1)], 2.0 * 1.5 + 4.0);
        assert_eq!(sys.k[(0, 1)], -1.5);
        assert_eq!(sys.d[(2, 2)], 2.0 * 0.5 + 0.25);
        assert_eq!(sys.m[(0, 0)], 2.0);
    }

    #[test]
    fn triple_chain_length_two_by_hand() {
        let sys = build_triple_chain(2, 1.0, 1.0, 0.5, 0.25).unwrap();
        #[rustfmt::skip]
        let k = Mat::from_row_slice(7, 7, &[
             2.0, -1.0,  0.0,  0.0,  0.0,  0.0,  0.0,
            -1.0,  2.0,  0.0,  0.0,  0.0,  0.0, -1.0,
             0.0,  0.0,  2.0, -1.0,  0.0,  0.0,  0.0,
             0.0,  0.0, -1.0,  2.0,  0.0,  0.0, -1.0,
             0.0,  0.0,  0.0,  0.0,  2.0, -1.0,  0.0,
             0.0,  0.0,  0.0,  0.0, -1.0,  2.0, -1.0,
             0.0, -1.0,  0.0, -1.0,  0.0, -1.0,  4.0,
        ]);
        assert_eq!(sys.k, k);
        assert_eq!(sys.d, Mat::identity(7, 7) * 0.5 + &k * 0.25);
        #[rustfmt::skip]
        let g = Mat::from_row_slice(2, 7, &[
            0.0, 1.0, 0.0, -1.0, 0.0,  0.0, 0.0,
            0.0, 0.0, 0.0,  1.0, 0.0, -1.0, 0.0,
        ]);
        assert_eq!(sys.jacobian(), &g);
        assert_eq!(sys.constraint_kind(), ConstraintKind::Velocity);
    }

    #[test]
    fn equal_velocity_rows_annihilate_constants() {
        let sys = build_triple_chain(5, 100.0, 2.0, 0.01, 0.01).unwrap();
        let ones = nalgebra::DVector::from_element(sys.dim(), 1.0);
        assert_eq!((sys.jacobian() * ones).norm(), 0.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(build_anchored_chain(2, 1.0, 1.0, 1.0).is_err());
        assert!(build_anchored_chain(5, -1.0, 1.0, 1.0).is_err());
        assert!(build_triple_chain(1, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(build_triple_chain(3, 1.0, 0.0, 0.0, 0.0).is_err());
        let bad_node = AnchoredChain {
            n_masses: 4,
            output_nodes: Some(vec![7]),
            ..Default::default()
        };
        assert!(bad_node.build().is_err());
    }

    #[test]
    fn validation_names_the_violation() {
        let sys = build_anchored_chain(4, 1.0, 1.0, 1.0).unwrap();
        let mut broken = sys.clone();
        broken.k[(0, 0)] = -10.0;
        let msg = broken.validate().unwrap_err().to_string();
        assert!(msg.contains("K not positive definite"), "{msg}");

        let mut broken = sys.clone();
        broken.m[(0, 1)] = 0.5;
        assert!(broken.validate().unwrap_err().to_string().contains("M not symmetric"));

        let mut broken = sys;
        broken.constraint = Constraint::Position(Mat::from_row_slice(
            2,
            4,
            &[1.0, 0.0, 0.0, -1.0, 2.0, 0.0, 0.0, -2.0],
        ));
        assert!(broken.validate().unwrap_err().to_string().contains("rank-deficient"));
    }
}
