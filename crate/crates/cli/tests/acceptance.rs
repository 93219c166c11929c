//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every line is printed even
//! when an earlier criterion fails. Failures are listed in the final summary
//! line. The process exits non-zero on failure only when `ACCEPTANCE_STRICT=1`,
//! so that `cargo test --workspace` still runs the remaining targets.
//! `ACCEPTANCE_ONLY=<id>` runs a single criterion.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use cvtomo::bounds::{bound_report, bound_report_auto};
use cvtomo::complexity::{
    binary_entropy, bosonic_entropy, effective_dimension, effective_rank, snap_ceil, BoundQuery,
};
use cvtomo::fock::{self, FockDensity, FockSpace, OracleOptions};
use cvtomo::gaussian::{random_gaussian_state, GaussianState, Purity};
use cvtomo::measurement::StateSource;
use cvtomo::robust::{median_of_means, mom_bins};
use cvtomo::symplectic;
use cvtomo::C64;
use cvtomo::tomography::{
    gaussian_tomography, synth_t_doped, t_compressible_tomography, CompressedEstimate,
    CompressedOptions, Estimator,
    GaussianTomographyOptions,
};

// Criterion 1.
const SANDWICH_PAIRS: usize = 200;
const SANDWICH_ENERGY_PER_MODE: f64 = 3.0;
const SANDWICH_DEFICIT: f64 = 1e-4;
const SANDWICH_SLACK: f64 = 2e-4;
const SANDWICH_RUNTIME: Duration = Duration::from_secs(120);
// Criterion 2.
const UPPER_SLOPE: f64 = 0.5;
const LOWER_SLOPE: f64 = 1.0;
const SLOPE_TOL: f64 = 0.05;
// Criterion 3.
const WILLIAMSON_CASES: usize = 500;
const WILLIAMSON_MAX_MODES: usize = 4;
const DECOMPOSITION_TOL: f64 = 1e-9;
const PERTURBATION_PAIRS: usize = 200;
// Criterion 4.
const ENERGY_STATES: usize = 200;
const ENERGY_CAP: f64 = 2.0;
const ENERGY_CUTOFF: usize = 40;
const ENERGY_REL_TOL: f64 = 1e-6;
const ENERGY_DIAGNOSTIC_CUTOFF: usize = 160;
// Criterion 5.
const CONVERGENCE_BUDGETS: [usize; 3] = [1_000, 10_000, 100_000];
const CONVERGENCE_TRIALS: usize = 100;
const CONVERGENCE_SLOPE: f64 = -0.25;
const CONVERGENCE_SLOPE_TOL: f64 = 0.1;
const GAUSSIAN_SUCCESS_DISTANCE: f64 = 0.05;
const GAUSSIAN_SUCCESS_RATE: f64 = 0.9;
// Criterion 6.
const GAUSSIANIFICATION_COPIES: usize = 100_000;
const GAUSSIANIFICATION_TRIALS: usize = 100;
// Criterion 7.
const BATTERY: usize = 20;
const RECONSTRUCTION_TOL: f64 = 1e-8;
const RECONSTRUCTION_HEADROOM: usize = 20;
const COMPRESSION_COPIES: usize = 100_000;
const POSTSELECTION_RATE: f64 = 0.5;
const COMPRESSION_DISTANCE: f64 = 0.1;
const BATTERY_SUCCESS: f64 = 0.8;
// Criterion 8.
const MOM_EPS: f64 = 0.1;
const MOM_DELTA: f64 = 0.05;
const MOM_REPETITIONS: usize = 10_000;
// Criterion 9.
const GRID_POINTS: usize = 500;
const SECOND_PATH_TOL: f64 = 1e-12;

// Pipeline settings shared by criteria 5–7.
const TOMOGRAPHY_EPS: f64 = 0.1;
const TOMOGRAPHY_DELTA: f64 = 0.05;
const TOMOGRAPHY_ENERGY: f64 = 2.0;
const DOPED_ENERGY_CAP: f64 = 4.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn squeezed() -> GaussianState<f64> {
    GaussianState::new(
        DVector::zeros(2),
        DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5])),
    )
    .unwrap()
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn bound_sandwich() -> Outcome {
    let start = Instant::now();
    let opts = OracleOptions {
        max_deficit: SANDWICH_DEFICIT,
        ..OracleOptions::default()
    };
    let mut violations = Vec::new();
    let (mut worst_deficit, mut tightest_upper, mut tightest_lower) = (0.0f64, f64::MAX, f64::MAX);
    for i in 0..SANDWICH_PAIRS {
        let mut r = rng(1_000 + i as u64);
        let n = 1 + i % 2;
        let cap = SANDWICH_ENERGY_PER_MODE * n as f64;
        let p1 = if i % 3 == 0 { Purity::Pure } else { Purity::Mixed };
        let p2 = if i % 4 == 0 { Purity::Pure } else { Purity::Mixed };
        let s1 = random_gaussian_state(n, cap, p1, &mut r).unwrap();
        let s2 = random_gaussian_state(n, cap, p2, &mut r).unwrap();
        let report = bound_report_auto(&s1, &s2).unwrap();
        let exact = match fock::gaussian_trace_distance(&s1, &s2, &opts) {
            Ok(d) => d,
            Err(e) => {
                violations.push(format!("pair {i}: oracle failed: {e}"));
                continue;
            }
        };
        worst_deficit = worst_deficit.max(exact.deficit);
        let upper = report.upper().min(1.0);
        tightest_upper = tightest_upper.min(upper - exact.distance);
        tightest_lower = tightest_lower.min(exact.distance - report.lower());
        if report.lower() > exact.distance + SANDWICH_SLACK
            || exact.distance > upper + SANDWICH_SLACK
            || exact.deficit > SANDWICH_DEFICIT
        {
            violations.push(format!(
                "pair {i}: lower {:.4e}, exact {:.6}, upper {:.6}",
                report.lower(),
                exact.distance,
                upper
            ));
        }
    }
    let elapsed = start.elapsed();
    let pass = violations.is_empty() && elapsed <= SANDWICH_RUNTIME;
    outcome(
        pass,
        format!(
            "{} pairs, {} violations{}, min(upper − exact) {:.3e}, min(exact − lower) {:.3e}, worst deficit {:.1e}, {:.1}s",
            SANDWICH_PAIRS,
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default(),
            tightest_upper,
            tightest_lower,
            worst_deficit,
            elapsed.as_secs_f64()
        ),
    )
}

fn error_propagation_exponents() -> Outcome {
    let eps: Vec<f64> = (0..13).map(|i| 1e-4 * 10f64.powf(i as f64 / 4.0)).collect();
    let mut upper_slopes = Vec::new();
    let mut lower_slopes = Vec::new();
    for seed in 0..6u64 {
        let n = 1 + (seed % 2) as usize;
        let purity = if seed < 3 { Purity::Pure } else { Purity::Mixed };
        let base = random_gaussian_state(n, 2.0 * n as f64, purity, &mut rng(2_000 + seed)).unwrap();
        let family: Vec<GaussianState<f64>> = eps
            .iter()
            .map(|&e| {
                GaussianState::new(
                    base.mean.clone(),
                    &base.cov + DMatrix::identity(2 * n, 2 * n) * e,
                )
                .unwrap()
            })
            .collect();
        let last = family.last().unwrap();
        let (photons, energy) = (last.mean_photon_number(), last.mean_energy());
        let reports: Vec<_> = family
            .iter()
            .map(|s| bound_report(&base, s, photons, energy).unwrap())
            .collect();
        let mixed: Vec<f64> = reports.iter().map(|r| r.upper_mixed).collect();
        upper_slopes.push(loglog_slope(&eps, &mixed));
        if let Some(pure) = reports.iter().map(|r| r.upper_pure).collect::<Option<Vec<f64>>>() {
            upper_slopes.push(loglog_slope(&eps, &pure));
        }
        let lower: Vec<f64> = reports.iter().map(|r| r.lower_from_cov).collect();
        lower_slopes.push(loglog_slope(&eps, &lower));
    }
    let upper_ok = upper_slopes.iter().all(|s| (s - UPPER_SLOPE).abs() <= SLOPE_TOL);
    let lower_ok = lower_slopes.iter().all(|s| (s - LOWER_SLOPE).abs() <= SLOPE_TOL);
    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        format!("[{lo:.4}, {hi:.4}]")
    };
    outcome(
        upper_ok && lower_ok,
        format!(
            "upper slopes {} (target {UPPER_SLOPE} ± {SLOPE_TOL}), lower slopes {} (target {LOWER_SLOPE} ± {SLOPE_TOL})",
            range(&upper_slopes),
            range(&lower_slopes)
        ),
    )
}

fn williamson_and_bloch_messiah() -> Outcome {
    let (mut worst_rec, mut worst_symp, mut worst_d, mut worst_bm) = (0.0f64, 0.0f64, f64::MAX, 0.0f64);
    let mut failures = 0;
    for i in 0..WILLIAMSON_CASES {
        let mut r = rng(3_000 + i as u64);
        let n = 1 + i % WILLIAMSON_MAX_MODES;
        let purity = if i % 2 == 0 { Purity::Pure } else { Purity::Mixed };
        let g = random_gaussian_state(n, 2.0 * n as f64, purity, &mut r).unwrap();
        let Ok(dec) = symplectic::williamson(&g.cov) else {
            failures += 1;
            continue;
        };
        worst_rec = worst_rec.max((dec.reconstruct() - &g.cov).norm() / g.cov.norm());
        worst_symp = worst_symp.max(symplectic::symplectic_residual(&dec.s).unwrap());
        worst_d = worst_d.min(dec.d.min());
        match symplectic::bloch_messiah(&dec.s) {
            Ok(e) => worst_bm = worst_bm.max((e.reconstruct() - &dec.s).norm() / dec.s.norm()),
            Err(_) => failures += 1,
        }
    }
    let mut perturbation_violations = 0;
    let mut tightest = f64::MAX;
    for i in 0..PERTURBATION_PAIRS {
        let mut r = rng(4_000 + i as u64);
        let n = 1 + i % WILLIAMSON_MAX_MODES;
        let v1 = random_gaussian_state(n, 2.0 * n as f64, Purity::Mixed, &mut r).unwrap().cov;
        let v2 = if i % 2 == 0 {
            random_gaussian_state(n, 2.0 * n as f64, Purity::Mixed, &mut r).unwrap().cov
        } else {
            let h = DMatrix::from_fn(2 * n, 2 * n, |_, _| r.random::<f64>() - 0.5);
            &v1 + (&h + h.transpose()) * 0.01
        };
        let (lhs, rhs) = symplectic::spectrum_perturbation(&v1, &v2).unwrap();
        tightest = tightest.min(rhs - lhs);
        if lhs > rhs {
            perturbation_violations += 1;
        }
    }
    let pass = failures == 0
        && worst_rec <= DECOMPOSITION_TOL
        && worst_symp <= DECOMPOSITION_TOL
        && worst_bm <= DECOMPOSITION_TOL
        && worst_d >= 1.0 - DECOMPOSITION_TOL
        && perturbation_violations == 0;
    outcome(
        pass,
        format!(
            "{WILLIAMSON_CASES} cases: max relative residual {worst_rec:.1e}, max ‖SΩSᵀ−Ω‖ {worst_symp:.1e}, max Bloch–Messiah residual {worst_bm:.1e}, min d {worst_d:.12}, {failures} failures; perturbation {perturbation_violations}/{PERTURBATION_PAIRS} violations (min slack {tightest:.2e})"
        ),
    )
}

fn energy_moments() -> Outcome {
    let space = FockSpace::new(1, ENERGY_CUTOFF).unwrap();
    let opts = OracleOptions {
        max_deficit: 1e-2,
        thermal_tail: 1e-14,
        ..OracleOptions::default()
    };
    let (mut worst_e, mut worst_e2) = (0.0f64, 0.0f64);
    let mut violations = 0;
    let mut worst_deficit = 0.0f64;
    let wide = FockSpace::new(1, ENERGY_DIAGNOSTIC_CUTOFF).unwrap();
    let mut wide_worst = 0.0f64;
    for i in 0..ENERGY_STATES {
        let purity = if i % 2 == 0 { Purity::Pure } else { Purity::Mixed };
        let g = random_gaussian_state(1, ENERGY_CAP, purity, &mut rng(5_000 + i as u64)).unwrap();
        let rho = fock::gaussian_density_matrix(&space, &g, &opts).unwrap();
        let deficit = 1.0 - rho.trace();
        worst_deficit = worst_deficit.max(deficit);
        let e = relative(rho.mean_energy(), g.mean_energy());
        let e2 = relative(rho.energy_second_moment(), g.energy_second_moment());
        worst_e = worst_e.max(e - deficit);
        worst_e2 = worst_e2.max(e2 - deficit);
        if e > ENERGY_REL_TOL + deficit || e2 > ENERGY_REL_TOL + deficit {
            violations += 1;
            // The same state on a larger cutoff separates truncation from a
            // formula error.
            let rho = fock::gaussian_density_matrix(&wide, &g, &opts).unwrap();
            let d = 1.0 - rho.trace();
            wide_worst = wide_worst
                .max(relative(rho.mean_energy(), g.mean_energy()) - d)
                .max(relative(rho.energy_second_moment(), g.energy_second_moment()) - d);
        }
    }
    outcome(
        violations == 0,
        format!(
            "{ENERGY_STATES} states at cutoff {ENERGY_CUTOFF}: {violations} outside relative {ENERGY_REL_TOL:e} + deficit; max excess over deficit Tr[ρÊ] {worst_e:.2e}, Tr[ρÊ²] {worst_e2:.2e}; max deficit {worst_deficit:.1e}; the violators at cutoff {ENERGY_DIAGNOSTIC_CUTOFF} have max excess {wide_worst:.1e}"
        ),
    )
}

fn gaussian_convergence() -> Outcome {
    let fixtures = [
        ("thermal", GaussianState::thermal(&[1.0]).unwrap()),
        ("squeezed", squeezed()),
        ("coherent", GaussianState::coherent(DVector::from_vec(vec![1.0, 0.5])).unwrap()),
    ];
    let budgets: Vec<f64> = CONVERGENCE_BUDGETS.iter().map(|&b| b as f64).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, truth) in fixtures {
        let mut medians = Vec::new();
        let mut final_success = 0;
        for &copies in &CONVERGENCE_BUDGETS {
            let mut distances = Vec::with_capacity(CONVERGENCE_TRIALS);
            for trial in 0..CONVERGENCE_TRIALS {
                let mut src = StateSource::gaussian(truth.clone()).unwrap();
                let opts = GaussianTomographyOptions::budgeted(copies);
                let d = gaussian_tomography(
                    &mut src,
                    TOMOGRAPHY_EPS,
                    TOMOGRAPHY_DELTA,
                    TOMOGRAPHY_ENERGY,
                    &opts,
                    &mut rng(6_000 + trial as u64),
                )
                .ok()
                .and_then(|r| r.achieved_distance)
                .unwrap_or(1.0);
                distances.push(d);
            }
            if copies == *CONVERGENCE_BUDGETS.last().unwrap() {
                final_success = distances.iter().filter(|&&d| d <= GAUSSIAN_SUCCESS_DISTANCE).count();
            }
            medians.push(median(distances));
        }
        let monotone = medians.windows(2).all(|w| w[1] < w[0]);
        let slope = loglog_slope(&budgets, &medians);
        let slope_ok = (slope - CONVERGENCE_SLOPE).abs() <= CONVERGENCE_SLOPE_TOL;
        let rate = final_success as f64 / CONVERGENCE_TRIALS as f64;
        let rate_ok = rate >= GAUSSIAN_SUCCESS_RATE;
        pass &= monotone && slope_ok && rate_ok;
        parts.push(format!(
            "{name}: medians {:.4}/{:.4}/{:.4} ({}), slope {slope:.3} ({}), success {:.0}% ({})",
            medians[0],
            medians[1],
            medians[2],
            if monotone { "monotone" } else { "NOT monotone" },
            if slope_ok { "ok" } else { "outside −0.25 ± 0.1" },
            100.0 * rate,
            if rate_ok { "ok" } else { "below 90%" },
        ));
    }
    outcome(pass, parts.join("; "))
}

fn gaussianification() -> Outcome {
    let space = FockSpace::new(1, 12).unwrap();
    let one = FockDensity::fock_state(space, &[1]).unwrap();
    let target = GaussianState::thermal(&[1.0]).unwrap();
    let mut hits = 0;
    let mut distances = Vec::new();
    for trial in 0..GAUSSIANIFICATION_TRIALS {
        let mut src = StateSource::fock(one.clone());
        let opts = GaussianTomographyOptions::budgeted(GAUSSIANIFICATION_COPIES);
        let report = gaussian_tomography(
            &mut src,
            TOMOGRAPHY_EPS,
            TOMOGRAPHY_DELTA,
            TOMOGRAPHY_ENERGY,
            &opts,
            &mut rng(7_000 + trial as u64),
        );
        let d = match report.map(|r| r.estimator) {
            Ok(Estimator::Gaussian(est)) => {
                fock::gaussian_trace_distance(&est, &target, &OracleOptions::default())
                    .map(|d| d.distance)
                    .unwrap_or(1.0)
            }
            _ => 1.0,
        };
        if d <= GAUSSIAN_SUCCESS_DISTANCE {
            hits += 1;
        }
        distances.push(d);
    }
    let rate = hits as f64 / GAUSSIANIFICATION_TRIALS as f64;
    outcome(
        rate >= GAUSSIAN_SUCCESS_RATE,
        format!(
            "|1⟩ at {GAUSSIANIFICATION_COPIES} copies: distance to thermal(ν=1) ≤ {GAUSSIAN_SUCCESS_DISTANCE} in {:.0}% of {GAUSSIANIFICATION_TRIALS} trials (median {:.4})",
            100.0 * rate,
            median(distances)
        ),
    )
}

/// Ladder-operator action on a truncated multimode Fock space.
struct Ladder {
    space: FockSpace,
    /// `up[j][i]`: index of the basis state with one more photon in mode `j`.
    up: Vec<Vec<Option<usize>>>,
}

impl Ladder {
    fn new(space: FockSpace) -> Self {
        let up = (0..space.n())
            .map(|j| {
                (0..space.dim())
                    .map(|i| {
                        let mut k = space.state(i).to_vec();
                        k[j] += 1;
                        space.index_of(&k)
                    })
                    .collect()
            })
            .collect();
        Self { space, up }
    }

    /// `R_k v` with `x = (a + a†)/√2` and `p = −i(a − a†)/√2`.
    fn quadrature(&self, k: usize, v: &[C64]) -> Vec<C64> {
        let j = k / 2;
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for (i, &vi) in v.iter().enumerate() {
            if let Some(u) = self.up[j][i] {
                // a† |k⟩ = √(k+1) |k+1⟩ and a |k+1⟩ = √(k+1) |k⟩.
                let amp = ((self.space.state(i)[j] + 1) as f64 / 2.0).sqrt();
                if k % 2 == 0 {
                    out[u] += vi * amp;
                    out[i] += v[u] * amp;
                } else {
                    out[u] += vi * C64::new(0.0, amp);
                    out[i] += v[u] * C64::new(0.0, -amp);
                }
            }
        }
        out
    }

    /// `G v` for `G = ½ Rᵀ K R + cᵀ R`.
    fn generator(&self, k: &DMatrix<f64>, c: &DVector<f64>, v: &[C64]) -> Vec<C64> {
        let dim = k.nrows();
        let r: Vec<Vec<C64>> = (0..dim).map(|l| self.quadrature(l, v)).collect();
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for a in 0..dim {
            let mut w = vec![C64::new(0.0, 0.0); v.len()];
            for b in 0..dim {
                if k[(a, b)] != 0.0 {
                    for (wi, ri) in w.iter_mut().zip(&r[b]) {
                        *wi += ri * (0.5 * k[(a, b)]);
                    }
                }
            }
            for (oi, ri) in out.iter_mut().zip(self.quadrature(a, &w)) {
                *oi += ri;
            }
            if c[a] != 0.0 {
                for (oi, ri) in out.iter_mut().zip(&r[a]) {
                    *oi += ri * c[a];
                }
            }
        }
        out
    }

    /// `exp(−iG) v` by Taylor series on sub-steps, halving the step until
    /// the series converges quickly.
    fn evolve(&self, k: &DMatrix<f64>, c: &DVector<f64>, v: Vec<C64>) -> Vec<C64> {
        let mut steps = 1usize;
        'outer: loop {
            let tau = 1.0 / steps as f64;
            let mut state = v.clone();
            for _ in 0..steps {
                let mut term = state.clone();
                let mut sum = state.clone();
                let mut converged = false;
                for order in 1..=40 {
                    let g = self.generator(k, c, &term);
                    let scale = C64::new(0.0, -tau / order as f64);
                    term = g.into_iter().map(|x| x * scale).collect();
                    let norm: f64 = term.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                    for (si, ti) in sum.iter_mut().zip(&term) {
                        *si += ti;
                    }
                    if norm < 1e-17 {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    steps *= 2;
                    continue 'outer;
                }
                state = sum;
            }
            return state;
        }
    }
}

/// Rebuilds `D_d U_S (|φ⟩ ⊗ |0⟩)` from quadratic generators, without the
/// library's circuit compiler. `S` is split as `P·O` (polar form), and each
/// factor `e^{ΩK}` is realised as `exp(−i ½ RᵀKR)`.
fn independent_doped_state(truth: &CompressedEstimate, cutoff: usize) -> Vec<C64> {
    let n = truth.n();
    let space = FockSpace::new(n, cutoff).unwrap();
    let ladder = Ladder::new(space.clone());
    let mut v = vec![C64::new(0.0, 0.0); space.dim()];
    let head = FockSpace::new(truth.head_modes, truth.head_cutoff).unwrap();
    for h in 0..head.dim() {
        let mut k = head.state(h).to_vec();
        k.resize(n, 0);
        v[space.index_of(&k).unwrap()] = truth.head[h];
    }
    let omega = symplectic::omega::<f64>(n);
    let s = &truth.s;
    let eig = nalgebra::SymmetricEigen::new(s * s.transpose());
    let p = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.sqrt()))
        * eig.eigenvectors.transpose();
    let log_p = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 0.5 * x.ln()))
        * eig.eigenvectors.transpose();
    let o = p.clone().try_inverse().unwrap() * s;
    let (q, t) = nalgebra::Schur::new(o.map(|x| C64::new(x, 0.0))).unpack();
    let log_t = DMatrix::from_diagonal(&t.diagonal().map(|z| z.ln()));
    let log_o = (&q * log_t * q.adjoint()).map(|z| z.re);
    let zero = DVector::zeros(2 * n);
    let k_of = |log: &DMatrix<f64>| {
        let k = -(&omega * log);
        0.5 * (&k + k.transpose())
    };
    // A kick `cᵀR` shifts the mean by `Ωc`, so `c = −Ω d`.
    let c = -(&omega * &truth.mean);
    let v = ladder.evolve(&k_of(&log_o), &zero, v);
    let v = ladder.evolve(&k_of(&log_p), &zero, v);
    ladder.evolve(&DMatrix::zeros(2 * n, 2 * n), &c, v)
}

fn compression_pipeline() -> Outcome {
    let mut worst_reconstruction = 0.0f64;
    let mut successes = 0;
    let mut lines = Vec::new();
    for i in 0..BATTERY {
        let (state, truth) = synth_t_doped(2, 1, 2, &mut rng(8_000 + i as u64), DOPED_ENERGY_CAP).unwrap();
        let rebuilt = independent_doped_state(&truth, state.space.cutoff() + RECONSTRUCTION_HEADROOM);
        let f = state.factor.column(0);
        let dim = state.space.dim();
        for i in 0..dim {
            for j in 0..dim {
                let e = (rebuilt[i] * rebuilt[j].conj() - f[i] * f[j].conj()).norm();
                worst_reconstruction = worst_reconstruction.max(e);
            }
        }
        let mut src = StateSource::fock_factored(state);
        let report = t_compressible_tomography(
            &mut src,
            1,
            TOMOGRAPHY_EPS,
            TOMOGRAPHY_DELTA,
            TOMOGRAPHY_ENERGY,
            &CompressedOptions::new(COMPRESSION_COPIES),
            &mut rng(9_000 + i as u64),
        );
        match report {
            Ok(r) => {
                let rate = r.diagnostics.postselection_rate.unwrap_or(0.0);
                let d = r.achieved_distance.unwrap_or(1.0);
                if rate >= POSTSELECTION_RATE && d <= COMPRESSION_DISTANCE {
                    successes += 1;
                }
                lines.push(format!("{d:.3}@{rate:.3}"));
            }
            Err(e) => lines.push(format!("error({e})")),
        }
    }
    let fraction = successes as f64 / BATTERY as f64;
    outcome(
        worst_reconstruction <= RECONSTRUCTION_TOL && fraction >= BATTERY_SUCCESS,
        format!(
            "max reconstruction error {worst_reconstruction:.1e}; {successes}/{BATTERY} with rate ≥ {POSTSELECTION_RATE} and distance ≤ {COMPRESSION_DISTANCE} (distance@rate: {})",
            lines.join(" ")
        ),
    )
}

fn median_of_means_tail() -> Outcome {
    // Exponential(1) has variance 1.
    let samples = snap_ceil(68.0 * (2.0 / MOM_DELTA).ln() / (MOM_EPS * MOM_EPS)) as usize;
    let bins = mom_bins(1, MOM_DELTA).unwrap();
    let mut r = rng(10_000);
    let mut buffer = vec![0.0f64; samples];
    let mut hits = 0;
    for _ in 0..MOM_REPETITIONS {
        for x in buffer.iter_mut() {
            *x = r.sample(Exp1);
        }
        if (median_of_means(&buffer, bins).unwrap() - 1.0).abs() <= MOM_EPS {
            hits += 1;
        }
    }
    let rate = hits as f64 / MOM_REPETITIONS as f64;
    outcome(
        rate >= 1.0 - MOM_DELTA,
        format!(
            "N = {samples}, K = {bins}: |μ̂ − 1| ≤ {MOM_EPS} in {hits}/{MOM_REPETITIONS} = {:.4} (need ≥ {})",
            rate,
            1.0 - MOM_DELTA
        ),
    )
}

/// `C(m+n, n)` multiplied in the opposite order to the library.
fn binomial_descending(m: f64, n: usize) -> f64 {
    (1..=n).rev().fold(1.0, |acc, i| acc * (m + i as f64) / i as f64)
}

fn g_natural(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        ((x + 1.0) * (x + 1.0).ln() - x * x.ln()) / std::f64::consts::LN_2
    }
}

fn h2_natural(x: f64) -> f64 {
    let t = |p: f64| if p == 0.0 { 0.0 } else { -p * p.ln() };
    (t(x) + t(1.0 - x)) / std::f64::consts::LN_2
}

fn clamp_lower(lead: f64, base: f64, rest: f64, denom: f64) -> f64 {
    if base <= 0.0 {
        return 1.0;
    }
    ((lead - rest) / denom).max(1.0)
}

fn complexity_consistency() -> Outcome {
    let mut queries = Vec::new();
    for n in 1..=5usize {
        for k in [1u32, 2] {
            for eps in [0.05, 0.1, 0.2, 0.3, 0.45] {
                for delta in [0.01, 0.1] {
                    for photons in [0.5, 1.0, 2.0, 4.0, 8.0] {
                        queries.push(BoundQuery { n, k, eps, delta, photons, t: Some(1), kappa: Some(2) });
                    }
                }
            }
        }
    }
    assert_eq!(queries.len(), GRID_POINTS);
    let mut order_violations = 0;
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut compared = 0;
    let mut track = |name: &str, a: f64, b: f64, q: &BoundQuery| {
        if a.is_finite() && b.is_finite() {
            compared += 1;
            let r = relative(a, b);
            if r > worst {
                worst = r;
                worst_at = format!("{name} at {q:?}");
            }
        }
    };
    for q in &queries {
        let row = q.evaluate().unwrap();
        if row.lower_pure > row.upper_pure.value
            || row.lower_mixed > row.upper_mixed.value
            || row.effective_rank.dim > row.effective_dimension.dim
        {
            order_violations += 1;
        }
        let (nf, kf) = (q.n as f64, q.k as f64);
        // Effective dimension and rank.
        let m = snap_ceil(nf * q.photons / q.eps.powf(2.0 / kf));
        let d = binomial_descending(m, q.n);
        track("d_eff", row.effective_dimension.dim, d, q);
        let mr = snap_ceil(nf * q.photons / q.eps.powf(1.0 / kf));
        track("r_eff", row.effective_rank.dim, binomial_descending(mr, q.n), q);
        // Lower bounds.
        let base = q.photons / (12.0 * q.eps).powf(2.0 / kf) - 1.0 / nf;
        let rest = (1.0 - q.delta) * (32.0 * std::f64::consts::PI).ln() / std::f64::consts::LN_2
            + h2_natural(q.delta);
        let lead = 2.0 * (1.0 - q.delta) * base.max(0.0).powf(nf);
        let lp = clamp_lower(lead, base, rest, nf * g_natural(q.photons));
        track("lower_pure", row.lower_pure, lp, q);
        let base = q.photons / (16.0 * q.eps).powf(1.0 / kf) - 1.0 / nf;
        let rest = 0.5 * (1.0 - q.delta) + 2.0 * h2_natural(q.delta);
        let lead = (1.0 - q.delta) * base.max(0.0).powf(2.0 * nf);
        let lm = clamp_lower(lead, base, rest, 2.0 * nf * g_natural(q.photons));
        track("lower_mixed", row.lower_mixed, lm, q);
        // Upper bounds.
        let scale = 2f64.powi(21) / (q.eps * q.eps) * (4.0 / q.delta).ln();
        track("upper_pure", row.upper_pure.value, snap_ceil(scale * d), q);
        let r = binomial_descending(snap_ceil(nf * q.photons / (q.eps / 20.0).powf(1.0 / kf)), q.n);
        track("upper_mixed", row.upper_mixed.value, snap_ceil(scale * d * r.min(d)), q);
        // t-compressible lower bound with E = N_phot + 1/2.
        let x = nf * q.photons;
        let base = x / (12.0 * q.eps) - 1.0;
        let rest = (1.0 - q.delta) * (32.0 * std::f64::consts::PI).ln() / std::f64::consts::LN_2
            + h2_natural(q.delta);
        let lt = clamp_lower(2.0 * (1.0 - q.delta) * base.max(0.0), base, rest, g_natural(x));
        track("lower_t_compressible", row.lower_t_compressible.unwrap(), lt, q);
        // Library entropies against the natural-log forms.
        track("g", bosonic_entropy(q.photons).unwrap(), g_natural(q.photons), q);
        track("H2", binary_entropy(q.delta).unwrap(), h2_natural(q.delta), q);
        let dd = effective_dimension(q.n, q.k, q.eps, q.photons).unwrap();
        let rr = effective_rank(q.n, q.k, q.eps, q.photons).unwrap();
        if rr.dim > dd.dim {
            order_violations += 1;
        }
    }
    outcome(
        order_violations == 0 && worst <= SECOND_PATH_TOL,
        format!(
            "{GRID_POINTS} points: {order_violations} ordering violations; {compared} values vs second path, max relative difference {worst:.1e}{}",
            if worst > 0.0 { format!(" ({worst_at})") } else { String::new() }
        ),
    )
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["cvtomo"];
    argv.extend_from_slice(args);
    cvtomo_cli::run(argv)
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let runs: Vec<(&str, Vec<String>)> = vec![
        (
            "gaussian",
            "simulate-tomography --pipeline gaussian --trials 12 --copies 10000 --seed 42 --fixture squeezed"
                .split(' ').map(String::from).collect(),
        ),
        (
            "moment",
            "simulate-tomography --pipeline moment --trials 6 --copies 20000 --seed 43"
                .split(' ').map(String::from).collect(),
        ),
        (
            "tcomp",
            "simulate-tomography --pipeline tcomp --trials 3 --copies 20000 --seed 44"
                .split(' ').map(String::from).collect(),
        ),
        (
            "synth",
            "synth --t 1 --kappa 2 --seed 45".split(' ').map(String::from).collect(),
        ),
        (
            "table",
            vec!["bounds-table".into(), "--grid".into(), "n=1:3;k=1,2;eps=0.1,0.3;delta=0.05;photons=1,2;t=1".into()],
        ),
    ];
    let mut mismatches = Vec::new();
    let mut failures = Vec::new();
    for (name, args) in &runs {
        let mut outputs = Vec::new();
        for threads in ["1", "3"] {
            for repeat in 0..2 {
                let file = path(&format!("{name}-{threads}-{repeat}.out"));
                let mut argv: Vec<&str> = args.iter().map(String::as_str).collect();
                argv.extend(["--out", &file]);
                if args[0] == "simulate-tomography" {
                    argv.extend(["--threads", threads]);
                }
                let code = cli(&argv);
                if code != 0 {
                    failures.push(format!("{name} exited {code}"));
                }
                outputs.push(std::fs::read(Path::new(&file)).unwrap_or_default());
            }
        }
        if outputs.iter().any(|o| o != &outputs[0] || o.is_empty()) {
            mismatches.push(*name);
        }
    }
    outcome(
        mismatches.is_empty() && failures.is_empty(),
        format!(
            "{} commands × 1 and 3 workers × 2 repeats: {} differing ({:?}); non-zero exits {:?}",
            runs.len(),
            mismatches.len(),
            mismatches,
            failures
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("bound sandwich", bound_sandwich),
        ("error-propagation exponents", error_propagation_exponents),
        ("Williamson / Bloch–Messiah", williamson_and_bloch_messiah),
        ("oracle vs formula energy moments", energy_moments),
        ("Gaussian tomography convergence", gaussian_convergence),
        ("Gaussianification robustness", gaussianification),
        ("compression pipeline", compression_pipeline),
        ("median-of-means tail", median_of_means_tail),
        ("complexity-calculator consistency", complexity_consistency),
        ("CLI determinism", cli_determinism),
    ];
    let filter: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = Vec::new();
    for (i, (title, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if filter.is_some_and(|f| f != id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} [{id:>2}] {title}: {} [{:.1}s]",
            result.detail,
            start.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
