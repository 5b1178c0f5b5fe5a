#![allow(dead_code)]

use opinf_dae::daesolve::{InputSignal, NewmarkParams, TimeGrid};
use opinf_dae::numkernel::{Mat, Vector};
use opinf_dae::opinf::{ModelDiagnostics, Provenance, ReducedModel};
use opinf_dae::podspace::CompressedData;
use opinf_dae::romsolve::newmark_ode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1)`.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| 2.0 * rng.random::<f64>() - 1.0)
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let a = random_matrix(rng, n, n);
    (&a + a.transpose()) * 0.5
}

/// `A Aᵀ + shift·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat {
    let a = random_matrix(rng, n, n);
    &a * a.transpose() + Mat::identity(n, n) * shift
}

/// PSD with the given rank (rank `n` gives a generic SPD matrix).
pub fn random_psd_rank(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Mat {
    let a = random_matrix(rng, n, rank);
    &a * a.transpose()
}

pub fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Piecewise-linear random input with `channels` rows.
pub fn random_table(rng: &mut ChaCha8Rng, channels: usize, t_end: f64, knots: usize) -> InputSignal {
    let times: Vec<f64> = (0..knots).map(|i| t_end * i as f64 / (knots - 1) as f64).collect();
    let values = (0..channels).map(|_| (0..knots).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()).collect();
    InputSignal::Table { times, values }
}

pub fn model(m: Mat, d: Mat, k: Mat, b: Mat, cp: Mat, cv: Mat) -> ReducedModel {
    ReducedModel {
        m,
        d,
        k,
        b,
        cp,
        cv,
        provenance: Provenance::Intrusive,
        diagnostics: ModelDiagnostics::default(),
    }
}

/// Known operators of order `r` with `m` inputs and `p` outputs.
pub fn ground_truth(seed: u64, r: usize, m: usize, p: usize) -> ReducedModel {
    let mut g = rng(seed);
    let mass = random_spd(&mut g, r, 1.0);
    let damping = random_spd(&mut g, r, 0.1) * 0.2;
    let stiffness = random_spd(&mut g, r, 1.0);
    let b = random_matrix(&mut g, r, m);
    let cp = random_matrix(&mut g, p, r);
    model(mass, damping, stiffness, b, cp, Mat::zeros(p, r))
}

/// Trajectory data of `truth` under a random table input. The Newmark triple
/// satisfies `M a + D v + K x = B u` at every step, so the derivatives are exact.
pub fn synthesize(truth: &ReducedModel, seed: u64, grid: &TimeGrid) -> CompressedData {
    let mut g = rng(seed ^ 0x5eed);
    let input = random_table(&mut g, truth.n_inputs(), grid.t_end(), 60);
    let r = truth.r();
    let x0 = Vector::from_iterator(r, (0..r).map(|_| 2.0 * g.random::<f64>() - 1.0));
    let v0 = Vector::zeros(r);
    let traj = newmark_ode(truth, grid, &input, &NewmarkParams::default(), &x0, &v0).unwrap();
    let mass = opinf_dae::numkernel::Cholesky::factor(&truth.m).unwrap();
    let forces = &truth.b * &traj.u - &truth.d * &traj.xdr - &truth.k * &traj.xr;
    let xddr = mass.solve_mat(&forces);
    CompressedData {
        xr: traj.xr,
        xdr: traj.xdr,
        xddr,
        u: traj.u,
        y: traj.y,
    }
}

/// Four masses in a line, wall springs at both ends, light damping.
pub fn four_dof(constraint_kind: Option<opinf_dae::models::ConstraintKind>) -> opinf_dae::models::SecondOrderDAE {
    use opinf_dae::models::{Constraint, ConstraintKind, SecondOrderDAE};
    let m = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, 1.5, 1.0]));
    let springs = [3.0, 1.0, 2.0, 1.5, 2.5];
    let mut k = Mat::zeros(4, 4);
    for i in 0..4 {
        k[(i, i)] = springs[i] + springs[i + 1];
        if i + 1 < 4 {
            k[(i, i + 1)] = -springs[i + 1];
            k[(i + 1, i)] = -springs[i + 1];
        }
    }
    let d = &k * 0.02 + &m * 0.01;
    let mut g = Mat::zeros(if constraint_kind.is_some() { 1 } else { 0 }, 4);
    if g.nrows() == 1 {
        g[(0, 0)] = 1.0;
        g[(0, 3)] = -1.0;
    }
    let constraint = match constraint_kind {
        Some(ConstraintKind::Velocity) => Constraint::Velocity(g),
        _ => Constraint::Position(g),
    };
    let b = Mat::from_column_slice(4, 1, &[0.0, 1.0, 0.0, 0.5]);
    SecondOrderDAE::new(m, d, k, constraint, b, Mat::identity(4, 4), Mat::zeros(4, 4)).unwrap()
}

/// `e(h) / e(h/2)` for the max displacement error against an `h/64` reference.
pub fn newmark_order_ratio(sys: &opinf_dae::models::SecondOrderDAE, h: f64, t_end: f64) -> f64 {
    use opinf_dae::daesolve::newmark_dae;
    let input = InputSignal::harmonic(1.0, 1.3).unwrap();
    let params = NewmarkParams::default();
    let steps = (t_end / h).round() as usize;
    let run = |factor: usize| newmark_dae(sys, &TimeGrid::new(0.0, h / factor as f64, steps * factor).unwrap(), &input, &params).unwrap().x;
    let reference = run(64);
    let error = |factor: usize| {
        let x = run(factor);
        (0..=steps)
            .map(|j| (x.column(j * factor) - reference.column(j * 64)).amax())
            .fold(0.0, f64::max)
    };
    error(1) / error(2)
}
