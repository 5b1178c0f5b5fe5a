mod common;

use common::*;
use opinf_dae::numkernel::{kernel_basis, psd_project, solve_saddle, solve_spd, sym_eig, thin_svd, Mat, Vector};
use proptest::prelude::*;
use rand::Rng;

fn orthonormality_defect(q: &Mat) -> f64 {
    (q.transpose() * q - Mat::identity(q.ncols(), q.ncols())).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_and_is_orthonormal(seed in any::<u64>(), rows in 1usize..9, cols in 1usize..9) {
        let a = random_matrix(&mut rng(seed), rows, cols);
        let svd = thin_svd(&a).unwrap();
        prop_assert!((svd.reconstruct() - &a).norm() <= 1e-10 * a.norm());
        prop_assert!(orthonormality_defect(&svd.u) <= 1e-10);
        prop_assert!(orthonormality_defect(&svd.w) <= 1e-10);
        prop_assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(svd.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn singular_values_match_gram_eigenvalues(seed in any::<u64>()) {
        let a = random_matrix(&mut rng(seed), 6, 6);
        let s = thin_svd(&a).unwrap().s;
        let eig = sym_eig(&(a.transpose() * &a)).unwrap();
        let s1 = s[0];
        for (i, lam) in eig.values.iter().rev().enumerate() {
            let root = lam.max(0.0).sqrt();
            prop_assert!((root - s[i]).abs() <= 1e-8 * s1, "sigma {} vs sqrt(lambda) {}", s[i], root);
        }
    }

    #[test]
    fn eig_residual_and_ordering(seed in any::<u64>(), n in 1usize..8) {
        let s = random_symmetric(&mut rng(seed), n);
        let eig = sym_eig(&s).unwrap();
        let q = &eig.vectors;
        let lam = Mat::from_diagonal(&Vector::from_vec(eig.values.clone()));
        prop_assert!((&s * q - q * lam).norm() <= 1e-9 * s.norm());
        prop_assert!(orthonormality_defect(q) <= 1e-10);
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn psd_projection_is_idempotent_and_psd(seed in any::<u64>(), n in 1usize..7) {
        let s = random_symmetric(&mut rng(seed), n) * 3.0;
        let p = psd_project(&s).unwrap();
        prop_assert!(sym_eig(&p).unwrap().values[0] >= -1e-12 * s.norm());
        let pp = psd_project(&p).unwrap();
        prop_assert!((&pp - &p).norm() <= 1e-10 * p.norm().max(1.0));
    }

    #[test]
    fn psd_projection_is_nearest_and_nonexpansive(seed in any::<u64>()) {
        let mut g = rng(seed);
        let s = random_symmetric(&mut g, 4) * 2.0;
        let p = psd_project(&s).unwrap();
        let d = (&s - &p).norm();
        for _ in 0..100 {
            let rank = g.random_range(1..=4usize);
            let probe = random_psd_rank(&mut g, 4, rank);
            prop_assert!(d <= (&s - &probe).norm() + 1e-12);
            prop_assert!((&p - &probe).norm() <= (&s - &probe).norm() + 1e-12);
        }
    }

    #[test]
    fn saddle_block_residuals(seed in any::<u64>(), n in 3usize..10, c in 0usize..3) {
        let mut g = rng(seed);
        let s = random_spd(&mut g, n, 0.5);
        let gm = random_matrix(&mut g, c, n);
        let f = Vector::from_iterator(n, random_matrix(&mut g, n, 1).iter().copied());
        let h = Vector::from_iterator(c, random_matrix(&mut g, c, 1).iter().copied());
        let (a, lam) = solve_saddle(&s, &gm, &f, &h).unwrap();
        let r1 = &s * &a + gm.transpose() * &lam - &f;
        let r2 = &gm * &a - &h;
        let scale = f.norm() + h.norm();
        prop_assert!(r1.norm() <= 1e-9 * scale);
        prop_assert!(r2.norm() <= 1e-9 * scale);
    }

    #[test]
    fn spd_solve_residual(seed in any::<u64>(), n in 1usize..10, k in 1usize..4) {
        let mut g = rng(seed);
        let s = random_spd(&mut g, n, 0.1);
        let b = random_matrix(&mut g, n, k);
        let z = solve_spd(&s, &b).unwrap();
        prop_assert!((&s * z - &b).norm() <= 1e-9 * b.norm());
    }

    #[test]
    fn kernel_basis_matches_projector(seed in any::<u64>(), n in 2usize..9, c in 0usize..2) {
        let mut g = rng(seed);
        let gm = random_matrix(&mut g, c.min(n - 1), n);
        let basis = kernel_basis(&gm).unwrap();
        prop_assert_eq!(basis.ncols(), n - gm.nrows());
        prop_assert!(orthonormality_defect(&basis) <= 1e-10);
        prop_assert!((&gm * &basis).norm() <= 1e-10 * gm.norm().max(1.0));
        // Independent route: I − Gᵀ(GGᵀ)⁻¹G.
        let mut projector = Mat::identity(n, n);
        if gm.nrows() > 0 {
            projector -= gm.transpose() * solve_spd(&(&gm * gm.transpose()), &gm).unwrap();
        }
        prop_assert!((&basis * basis.transpose() - projector).norm() <= 1e-10);
    }
}

#[test]
fn random_six_by_four_reconstruction() {
    let a = random_matrix(&mut rng(7), 6, 4);
    let svd = thin_svd(&a).unwrap();
    let mut us = svd.u.clone();
    for j in 0..4 {
        for i in 0..6 {
            us[(i, j)] *= svd.s[j];
        }
    }
    let back = us * svd.w.transpose();
    assert!((back - &a).norm() <= 1e-10 * a.norm());
}

#[test]
fn kernel_of_end_to_end_difference() {
    let mut gm = Mat::zeros(1, 6);
    gm[(0, 0)] = 1.0;
    gm[(0, 5)] = -1.0;
    let basis = kernel_basis(&gm).unwrap();
    assert_eq!(basis.ncols(), 5);
    assert!((&gm * &basis).norm() <= 1e-12);
    let null = thin_svd(&gm.transpose()).unwrap();
    let normal = null.u.column(0);
    assert!((basis.transpose() * normal).norm() <= 1e-12);
}

#[test]
fn two_by_two_analytic_kernel() {
    let gm = Mat::from_row_slice(1, 2, &[1.0, -1.0]);
    let basis = kernel_basis(&gm).unwrap();
    let expected = std::f64::consts::FRAC_1_SQRT_2;
    assert!((basis[(0, 0)].abs() - expected).abs() < 1e-15);
    assert!((basis[(0, 0)] - basis[(1, 0)]).abs() < 1e-15);
}

/// Every PSD matrix sharing the eigenvectors of `S` is `Q diag(μ) Qᵀ` with
/// `μ ≥ 0`; the distance is smallest at `μ = max(λ, 0)`. Enumerate the
/// candidates that keep, clip or zero each eigenvalue.
#[test]
fn nearest_psd_beats_every_eigenvalue_clipping() {
    let mut g = rng(11);
    for _ in 0..50 {
        let s = random_symmetric(&mut g, 4) * 2.0;
        let p = psd_project(&s).unwrap();
        let eig = sym_eig(&s).unwrap();
        let best = (&s - &p).norm();
        for mask in 0..3usize.pow(4) {
            let mut code = mask;
            let mu: Vec<f64> = eig
                .values
                .iter()
                .map(|&l| {
                    let choice = code % 3;
                    code /= 3;
                    match choice {
                        0 => l,
                        1 => l.max(0.0),
                        _ => 0.0,
                    }
                })
                .collect();
            if mu.iter().any(|&m| m < 0.0) {
                continue;
            }
            let cand = eig.recompose(|lam| mu[eig.values.iter().position(|&v| v == lam).unwrap()]);
            assert!(best <= (&s - cand).norm() + 1e-12);
        }
    }
}
