//! Property tests for the invariants the toolkit relies on.

use cvtomo::bounds::{bound_report_auto, f_of_n};
use cvtomo::complexity::{effective_dimension, effective_rank, snap_ceil};
use cvtomo::fock::{self, FockSpace, OracleOptions};
use cvtomo::gaussian::{GaussianState, Purity, random_gaussian_state};
use cvtomo::robust::{median_of_means, regularize};
use cvtomo::symplectic::{self, omega};
use cvtomo::tomography::projection_cutoff;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(n: usize, cap: f64, pure: bool, seed: u64) -> GaussianState<f64> {
    let purity = if pure { Purity::Pure } else { Purity::Mixed };
    random_gaussian_state(n, cap, purity, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn williamson_reconstructs_and_is_symplectic(n in 1usize..=4, pure: bool, seed: u64) {
        let g = state(n, 2.0 * n as f64, pure, seed);
        let dec = symplectic::williamson(&g.cov).unwrap();
        let scale = g.cov.norm();
        prop_assert!((dec.reconstruct() - &g.cov).norm() <= 1e-9 * scale);
        prop_assert!(symplectic::symplectic_residual(&dec.s).unwrap() <= 1e-9 * dec.s.norm().powi(2));
        for w in dec.d.as_slice().windows(2) {
            prop_assert!(w[0] >= w[1] - 1e-9);
        }
        prop_assert!(dec.d.iter().all(|&d| d >= 1.0 - 1e-9));
    }

    #[test]
    fn symplectic_inverse_is_omega_transpose_conjugate(n in 1usize..=4, seed: u64) {
        let s = symplectic::random_symplectic(n, 3.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let om = omega::<f64>(n);
        let inv = &om * s.transpose() * om.transpose();
        prop_assert!((&inv * &s - DMatrix::identity(2 * n, 2 * n)).norm() <= 1e-10 * s.norm().powi(2));
    }

    #[test]
    fn bloch_messiah_reconstructs(n in 1usize..=4, seed: u64) {
        let s = symplectic::random_symplectic(n, 3.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let e = symplectic::bloch_messiah(&s).unwrap();
        prop_assert!((e.reconstruct() - &s).norm() <= 1e-9 * s.norm());
        prop_assert!(e.z.iter().all(|&z| z >= 1.0 - 1e-12));
    }

    #[test]
    fn spectrum_perturbation_inequality(n in 1usize..=3, a: u64, b: u64) {
        let v1 = state(n, 2.0 * n as f64, false, a).cov;
        let v2 = state(n, 2.0 * n as f64, false, b).cov;
        let (lhs, rhs) = symplectic::spectrum_perturbation(&v1, &v2).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn gaussian_maps_preserve_validity(n in 1usize..=3, seed: u64) {
        let g = state(n, 1.5 * n as f64, false, seed);
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let s = symplectic::random_symplectic(n, 2.0, &mut r).unwrap();
        let d = DVector::from_fn(2 * n, |i, _| 0.1 * i as f64);
        let h = g.apply_gaussian_map(&s, &d).unwrap();
        prop_assert!(h.min_uncertainty_eigenvalue() >= -1e-9 * h.cov.norm());
        let ds = symplectic::symplectic_eigenvalues(&g.cov).unwrap();
        let dh = symplectic::symplectic_eigenvalues(&h.cov).unwrap();
        prop_assert!((ds - dh).amax() <= 1e-7 * h.cov.norm());
    }

    #[test]
    fn bounds_are_ordered(n in 1usize..=2, a: u64, b: u64, pure: bool) {
        let s1 = state(n, 3.0 * n as f64, pure, a);
        let s2 = state(n, 3.0 * n as f64, false, b);
        let r = bound_report_auto(&s1, &s2).unwrap();
        prop_assert!(r.lower() <= r.upper());
        prop_assert!(r.lower() <= 1.0 / 200.0);
        let c = r.clipped();
        prop_assert!(c.upper() <= 1.0);
    }

    #[test]
    fn f_of_n_is_increasing(x in 0.0f64..50.0, dx in 1e-6f64..10.0) {
        prop_assert!(f_of_n(x + dx).unwrap() > f_of_n(x).unwrap());
    }

    #[test]
    fn median_of_means_lies_within_the_sample_range(
        xs in prop::collection::vec(-1e3f64..1e3, 1..300),
        bins in 1usize..40,
    ) {
        let m = median_of_means(&xs, bins).unwrap();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
    }

    #[test]
    fn regularizer_shifts_the_uncertainty_eigenvalue(n in 1usize..=3, seed: u64, lambda in 0.0f64..1.0) {
        let g = state(n, 2.0 * n as f64, false, seed);
        let (_, before) = regularize(&g.cov, 0.0);
        let (v, after) = regularize(&g.cov, lambda);
        prop_assert!((&v - &g.cov - DMatrix::identity(2 * n, 2 * n) * lambda).norm() < 1e-12);
        prop_assert!((after - before - lambda).abs() <= 1e-9);
    }

    #[test]
    fn rank_never_exceeds_dimension(n in 1usize..=6, k in 1u32..=4, eps in 0.01f64..0.99, photons in 0.01f64..10.0) {
        let d = effective_dimension(n, k, eps, photons).unwrap();
        let r = effective_rank(n, k, eps, photons).unwrap();
        prop_assert!(r.dim <= d.dim);
        prop_assert!(d.dim <= d.ceiling * (1.0 + 1e-12));
    }

    #[test]
    fn projection_cutoff_grows_as_accuracy_tightens(n in 1usize..=4, k in 1u32..=3, eps in 0.05f64..0.9, photons in 0.1f64..5.0) {
        let loose = projection_cutoff(n, k, eps, photons).unwrap();
        let tight = projection_cutoff(n, k, eps * 0.5, photons).unwrap();
        prop_assert!(tight >= loose);
        prop_assert!(loose as f64 >= n as f64 * photons / (eps / 2.0).powf(2.0 / k as f64) * (1.0 - 1e-12));
    }

    #[test]
    fn snap_ceil_is_a_ceiling(x in -1e6f64..1e6) {
        let c = snap_ceil(x);
        prop_assert_eq!(c, c.round());
        prop_assert!(c >= x - 1e-13 * x.abs().max(1.0));
        prop_assert!(c < x + 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fock_energy_matches_the_covariance_formula(seed: u64, pure: bool) {
        let g = state(1, 2.0, pure, seed);
        let space = FockSpace::new(1, 40).unwrap();
        let opts = OracleOptions { max_deficit: 1e-4, thermal_tail: 1e-8, ..OracleOptions::default() };
        let rho = fock::gaussian_density_matrix(&space, &g, &opts).unwrap();
        // Missing weight sits above 40 photons, so it shifts the energy by
        // at most about 100 × deficit at this budget.
        let e = rho.mean_energy() / rho.trace();
        prop_assert!((e - g.mean_energy()).abs() <= 1e-6 * g.mean_energy() + 100.0 * rho.deficit);
    }

    #[test]
    fn trace_distance_is_a_metric_on_gaussian_states(a: u64, b: u64, c: u64) {
        let (x, y, z) = (state(1, 1.5, false, a), state(1, 1.5, false, b), state(1, 1.5, true, c));
        let o = OracleOptions::default();
        let dxy = fock::gaussian_trace_distance(&x, &y, &o).unwrap().distance;
        let dyx = fock::gaussian_trace_distance(&y, &x, &o).unwrap().distance;
        let dxz = fock::gaussian_trace_distance(&x, &z, &o).unwrap().distance;
        let dzy = fock::gaussian_trace_distance(&z, &y, &o).unwrap().distance;
        prop_assert!((0.0..=1.0).contains(&dxy));
        prop_assert!((dxy - dyx).abs() <= 0.03);
        prop_assert!(dxy <= dxz + dzy + 0.05);
    }
}
