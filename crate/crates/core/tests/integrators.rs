mod common;

use common::*;
use opinf_dae::daesolve::{
    consistent_initialize, newmark_dae, newmark_dae_from, DaeOptions, InputSignal, NewmarkParams, SnapshotSet, TimeGrid,
};
use opinf_dae::models::{build_anchored_chain, build_triple_chain, ConstraintKind, SecondOrderDAE};
use opinf_dae::numkernel::{Mat, Vector};
use opinf_dae::opinf::intrusive_reduce;
use opinf_dae::podspace::{PodBasis, PodSource};
use opinf_dae::romsolve::newmark_ode;
use opinf_dae::Error;
use proptest::prelude::*;

fn random_vector(g: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vector {
    Vector::from_iterator(n, random_matrix(g, n, 1).iter().copied())
}

fn energy(sys: &SecondOrderDAE, snaps: &SnapshotSet, j: usize) -> f64 {
    let (x, v) = (snaps.x.column(j), snaps.xd.column(j));
    0.5 * (v.dot(&(&sys.m * v)) + x.dot(&(&sys.k * x)))
}

#[test]
fn initialization_matches_dense_kkt() {
    let sys = build_anchored_chain(3, 1.5, 2.0, 0.4).unwrap();
    let g = sys.jacobian().clone();
    let mut r = rng(3);
    for _ in 0..10 {
        let (x0, v0, u0) = (random_vector(&mut r, 3), random_vector(&mut r, 3), random_vector(&mut r, 1));
        let init = consistent_initialize(&sys, &x0, &v0, &u0).unwrap();

        let ggt = &g * g.transpose();
        let project = |z: &Vector| z - g.transpose() * (ggt.clone().try_inverse().unwrap() * (&g * z));
        let (xc, vc) = (project(&x0), project(&v0));
        assert!((&g * &init.x).amax() <= 1e-12);
        assert!((&init.x - &xc).amax() <= 1e-12);
        assert!((&init.v - &vc).amax() <= 1e-12);

        let mut kkt = Mat::zeros(4, 4);
        kkt.view_mut((0, 0), (3, 3)).copy_from(&sys.m);
        kkt.view_mut((0, 3), (3, 1)).copy_from(&g.transpose());
        kkt.view_mut((3, 0), (1, 3)).copy_from(&g);
        let force = &sys.b * &u0 - &sys.d * &vc - &sys.k * &xc;
        let mut rhs = Vector::zeros(4);
        rhs.rows_mut(0, 3).copy_from(&force);
        let sol = kkt.lu().solve(&rhs).unwrap();
        assert!((&init.a - sol.rows(0, 3)).amax() <= 1e-12 * sol.amax().max(1.0));
        assert!((init.lambda[0] - sol[3]).abs() <= 1e-12 * sol.amax().max(1.0));
    }
}

#[test]
fn velocity_initialization_keeps_displacement() {
    let sys = build_triple_chain(2, 1.0, 1.0, 0.1, 0.1).unwrap();
    let mut r = rng(5);
    let (x0, v0) = (random_vector(&mut r, 7), random_vector(&mut r, 7));
    let init = consistent_initialize(&sys, &x0, &v0, &Vector::zeros(1)).unwrap();
    assert_eq!(init.x, x0);
    assert!((sys.jacobian() * &init.v).amax() <= 1e-12);
    assert!((sys.jacobian() * &init.a).amax() <= 1e-12);
}

#[test]
fn unconstrained_limit_matches_classical_newmark() {
    let m = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let k = Mat::from_row_slice(2, 2, &[4.0, -1.0, -1.0, 3.0]);
    let d = &k * 0.05;
    let sys = SecondOrderDAE::new(
        m,
        d,
        k,
        opinf_dae::models::Constraint::Position(Mat::zeros(0, 2)),
        Mat::from_column_slice(2, 1, &[1.0, -0.5]),
        Mat::identity(2, 2),
        Mat::zeros(2, 2),
    )
    .unwrap();
    let grid = TimeGrid::new(0.0, 0.05, 400).unwrap();
    let input = InputSignal::harmonic(0.8, 2.1).unwrap();
    let fom = newmark_dae(&sys, &grid, &input, &NewmarkParams::default()).unwrap();
    let basis = PodBasis {
        vr: Mat::identity(2, 2),
        singular_values: vec![],
        cum_energy: vec![],
        source: PodSource::Displacement,
        rank: 2,
    };
    let rom = intrusive_reduce(&sys, &basis).unwrap();
    let z = Vector::zeros(2);
    let traj = newmark_ode(&rom, &grid, &input, &NewmarkParams::default(), &z, &z).unwrap();
    let scale = fom.x.amax();
    assert!((&traj.xr - &fom.x).amax() <= 1e-12 * scale);
    assert!((&traj.y - &fom.y).amax() <= 1e-12 * scale);
}

#[test]
fn snapshots_satisfy_newmark_identities() {
    let sys = build_anchored_chain(12, 2.0, 3.0, 0.5).unwrap();
    let grid = TimeGrid::new(0.0, 0.1, 300).unwrap();
    let params = NewmarkParams::default();
    let s = newmark_dae(&sys, &grid, &InputSignal::impulse(1.0, 2.0).unwrap(), &params).unwrap();
    let h = grid.dt;
    let scale = s.x.amax() + s.xd.amax() + s.xdd.amax();
    for j in 0..grid.steps {
        let (a0, a1) = (s.xdd.column(j), s.xdd.column(j + 1));
        let x = s.x.column(j) + s.xd.column(j) * h + (a0 * (0.5 - params.beta) + a1 * params.beta) * (h * h);
        let v = s.xd.column(j) + (a0 * (1.0 - params.gamma) + a1 * params.gamma) * h;
        assert!((x - s.x.column(j + 1)).amax() <= 1e-13 * scale, "displacement update at step {j}");
        assert!((v - s.xd.column(j + 1)).amax() <= 1e-13 * scale, "velocity update at step {j}");
    }
}

#[test]
fn small_chains_keep_constraints() {
    let grid = TimeGrid::new(0.0, 0.1, 500).unwrap();
    let input = InputSignal::impulse(1.0, 2.0).unwrap();
    for sys in [build_anchored_chain(20, 100.0, 2.0, 5.0).unwrap(), build_triple_chain(8, 100.0, 2.0, 0.01, 0.01).unwrap()] {
        let s = newmark_dae(&sys, &grid, &input, &NewmarkParams::default()).unwrap();
        assert!(s.diagnostics.max_constraint_residual <= 1e-9);
        let residual = match sys.constraint_kind() {
            ConstraintKind::Position => (sys.jacobian() * &s.x).amax(),
            ConstraintKind::Velocity => (sys.jacobian() * &s.xd).amax(),
        };
        assert!(residual <= 1e-9);
        assert!(s.y.amax() > 0.0);
    }
}

#[test]
fn constrained_scheme_is_second_order() {
    for kind in [ConstraintKind::Position, ConstraintKind::Velocity] {
        let ratio = newmark_order_ratio(&four_dof(Some(kind)), 0.1, 20.0);
        assert!((3.4..=4.6).contains(&ratio), "{kind:?}: ratio {ratio}");
    }
}

#[test]
fn projected_velocity_option_removes_drift() {
    let sys = build_anchored_chain(10, 1.0, 1.0, 0.1).unwrap();
    let grid = TimeGrid::new(0.0, 0.05, 200).unwrap();
    let input = InputSignal::impulse(1.0, 1.0).unwrap();
    let init = consistent_initialize(&sys, &Vector::zeros(10), &Vector::zeros(10), &Vector::zeros(1)).unwrap();
    let options = DaeOptions {
        project_velocity: true,
        ..DaeOptions::default()
    };
    let s = newmark_dae_from(&sys, &grid, &input, &NewmarkParams::default(), &init, &options).unwrap();
    assert!((sys.jacobian() * &s.xd).amax() <= 1e-12);
    assert!(s.diagnostics.max_constraint_residual <= 1e-9);
}

#[test]
fn mismatched_input_rejected() {
    let sys = build_anchored_chain(5, 1.0, 1.0, 0.1).unwrap();
    let grid = TimeGrid::new(0.0, 0.1, 10).unwrap();
    let err = newmark_dae(&sys, &grid, &InputSignal::Zero { channels: 2 }, &NewmarkParams::default()).unwrap_err();
    assert!(matches!(err, Error::Dimension { .. }));
}

#[test]
fn snapshot_directory_round_trip() {
    let sys = build_triple_chain(3, 1.0, 1.0, 0.05, 0.05).unwrap();
    let grid = TimeGrid::new(0.0, 0.2, 40).unwrap();
    let s = newmark_dae(&sys, &grid, &InputSignal::harmonic(1.0, 0.7).unwrap(), &NewmarkParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    s.write_dir(&a).unwrap();
    let back = SnapshotSet::read_dir(&a).unwrap();
    assert_eq!(back, s);
    back.write_dir(&b).unwrap();
    for name in ["X.mtx", "Xd.mtx", "Xdd.mtx", "U.mtx", "Y.mtx", "Lambda.mtx", "snapshots.json", "trajectory.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn free_vibration_never_gains_energy(seed in any::<u64>(), velocity in any::<bool>(), n in 3usize..8) {
        let sys = if velocity {
            build_triple_chain(n, 1.0 + seed as f64 % 3.0, 2.0, 0.05, 0.02).unwrap()
        } else {
            build_anchored_chain(n, 1.0, 2.0 + seed as f64 % 5.0, 0.3).unwrap()
        };
        let dim = sys.dim();
        let mut r = rng(seed);
        let init = consistent_initialize(&sys, &random_vector(&mut r, dim), &random_vector(&mut r, dim), &Vector::zeros(1)).unwrap();
        let grid = TimeGrid::new(0.0, 0.1, 200).unwrap();
        let s = newmark_dae_from(&sys, &grid, &InputSignal::Zero { channels: 1 }, &NewmarkParams::default(), &init, &DaeOptions::default()).unwrap();
        let e0 = energy(&sys, &s, 0);
        for j in 0..grid.steps {
            prop_assert!(energy(&sys, &s, j + 1) <= energy(&sys, &s, j) + 1e-8 * e0, "energy grew at step {}", j);
        }
    }
}
