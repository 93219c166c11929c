//! End-to-end learners.
//!
//! * [`gaussian_tomography`]: moments from homodyne data, returned as a
//!   Gaussian state.
//! * [`moment_constrained_tomography`]: projection onto `H_m` followed by
//!   finite-dimensional tomography of the kept copies.
//! * [`t_compressible_tomography`]: moments, Williamson frame, vacuum
//!   post-selection of the tail modes and tomography of the head.
//!
//! The finite-dimensional step is [`inner_tomography`]: least-squares
//! inversion of outcome frequencies in a fixed family of random orthonormal
//! bases, clipped to a density matrix. Sampling from Fock-space states is
//! exact: every per-copy measurement is drawn from the oracle probabilities.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::complexity::snap_ceil;
use crate::error::{Error, Result};
use crate::fock::{
    self, FactoredDensity, FockDensity, FockSpace, GaussianCircuit, OracleOptions,
};
use crate::gaussian::GaussianState;
use crate::measurement::{SourceState, StateSource};
use crate::robust::{estimate_moments, MomentEstimate, MomentOptions, Regularization};
use crate::symplectic::{self, omega};
use crate::C64;

fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

fn check_accuracy(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ε = {eps} and δ = {delta} must lie in (0, 1)"
        )));
    }
    Ok(())
}

fn check_energy(energy: f64) -> Result<()> {
    if !(energy >= 0.5 && energy.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "energy per mode {energy} must be at least 1/2"
        )));
    }
    Ok(())
}

/// `S⁻¹ = Ω Sᵀ Ωᵀ` for a symplectic `S`.
fn symplectic_inverse(s: &DMatrix<f64>) -> DMatrix<f64> {
    let om = omega::<f64>(s.nrows() / 2);
    &om * s.transpose() * om.transpose()
}

/// One binomial draw; `p` is clamped to `[0, 1]`.
fn binomial<R: Rng + ?Sized>(trials: usize, p: f64, rng: &mut R) -> usize {
    let p = p.clamp(0.0, 1.0);
    if trials == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return trials;
    }
    Binomial::new(trials as u64, p)
        .expect("valid binomial parameters")
        .sample(rng) as usize
}

/// Multinomial counts through sequential binomials.
fn multinomial<R: Rng + ?Sized>(trials: usize, probs: &[f64], rng: &mut R) -> Vec<usize> {
    let mut left = trials;
    let mut mass: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        let p = p.max(0.0);
        let k = if i + 1 == probs.len() {
            left
        } else if mass > 0.0 {
            binomial(left, p / mass, rng)
        } else {
            0
        };
        out.push(k);
        left -= k;
        mass -= p;
    }
    out
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// A density matrix (and, for pure estimates, its vector) on `H_cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub n: usize,
    pub cutoff: usize,
    pub matrix: DMatrix<C64>,
    pub vector: Option<DVector<C64>>,
}

impl DensityEstimate {
    pub fn to_density(&self) -> Result<FockDensity> {
        FockDensity::new(FockSpace::new(self.n, self.cutoff)?, self.matrix.clone())
    }
}

/// The triplet `(m̃, S̃, |φ̃⟩)` describing `D_m̃ U_S̃ (|φ̃⟩ ⊗ |0⟩^{n−t})`.
///
/// The head occupies the first `head_modes` modes and lives on
/// `H_head_cutoff` of those modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedEstimate {
    pub mean: DVector<f64>,
    pub s: DMatrix<f64>,
    pub head_modes: usize,
    pub head_cutoff: usize,
    pub head: DVector<C64>,
}

impl CompressedEstimate {
    pub fn n(&self) -> usize {
        self.mean.len() / 2
    }

    /// `|φ̃⟩ ⊗ |0⟩^{n−t}` on `space`; head components beyond the cutoff are
    /// dropped.
    fn embedded_head(&self, space: &FockSpace) -> Result<DVector<C64>> {
        let n = space.n();
        let t = self.head_modes;
        let mut v = DVector::zeros(space.dim());
        if t == 0 {
            v[0] = c(self.head[0].norm());
            return Ok(v);
        }
        let tail: Vec<usize> = (t..n).collect();
        let (head_space, keep) = fock::head_embedding(space, &tail)?;
        let own = FockSpace::new(t, self.head_cutoff)?;
        if self.head.len() != own.dim() {
            return Err(Error::DimensionMismatch {
                expected: own.dim(),
                got: self.head.len(),
            });
        }
        // Both head spaces are graded, so the shorter one is a prefix.
        let shared = own.dim().min(head_space.dim());
        for h in 0..shared {
            v[keep[h]] = self.head[h];
        }
        Ok(v)
    }

    /// `Π D_m̃ U_S̃ (|φ̃⟩⊗|0⟩)` on `space`, computed in a working space with
    /// `buffer` extra photons, and the squared norm lost to truncation.
    pub fn reconstruct(&self, space: &FockSpace, buffer: usize) -> Result<(DVector<C64>, f64)> {
        if space.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: space.n(),
            });
        }
        let work = FockSpace::new(space.n(), space.cutoff() + buffer)?;
        let v = self.embedded_head(&work)?;
        let norm2 = self.head.norm_squared();
        let mut block = DMatrix::from_column_slice(work.dim(), 1, v.as_slice());
        let circuit = GaussianCircuit::new(&work, &self.s, &self.mean)?;
        circuit.apply(&mut block);
        let out = block.rows(0, space.dim()).column(0).into_owned();
        let leak = (1.0 - out.norm_squared() / norm2).max(0.0);
        Ok((out, leak))
    }

    /// The reconstructed pure state as a density on `space`.
    pub fn to_density(&self, space: &FockSpace, buffer: usize) -> Result<FockDensity> {
        let (v, _) = self.reconstruct(space, buffer)?;
        FockDensity::from_pure(space.clone(), &v)
    }
}

/// The learned state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum Estimator {
    Gaussian(GaussianState<f64>),
    Fock(DensityEstimate),
    Compressed(CompressedEstimate),
}

/// Per-stage numbers recorded by the pipelines; fields a pipeline does not
/// touch stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Internal accuracy handed to the moment estimator.
    pub moment_epsilon: Option<f64>,
    pub moment_copies: Option<usize>,
    pub regularizer: Option<f64>,
    pub min_uncertainty_eigenvalue: Option<f64>,
    /// Mean energy `Tr[ρ̃Ê]` of the Gaussian estimate.
    pub estimate_energy: Option<f64>,
    /// Estimated symplectic eigenvalues.
    pub symplectic_eigenvalues: Option<Vec<f64>>,
    /// Cutoff prescribed by the accuracy analysis.
    pub nominal_cutoff: Option<usize>,
    /// Cutoff actually used for the projection.
    pub cutoff: Option<usize>,
    /// Probability that one copy survives the projection onto `H_m`.
    pub retention_probability: Option<f64>,
    /// Observed fraction of copies kept by the projection.
    pub retained_fraction: Option<f64>,
    /// Trace distance between the true state and its projection.
    pub projection_distance: Option<f64>,
    pub postselection_copies: Option<usize>,
    /// Probability that one copy passes the tail-vacuum test.
    pub postselection_probability: Option<f64>,
    /// Observed pass rate of the tail-vacuum test.
    pub postselection_rate: Option<f64>,
    /// Mean energy of the post-selected head state.
    pub head_energy: Option<f64>,
    /// Head-energy bound `80n²E₂²` the analysis assumes.
    pub head_energy_bound: Option<f64>,
    pub inner_dimension: Option<usize>,
    pub inner_copies: Option<usize>,
    pub inner_bases: Option<usize>,
    /// Largest truncation deficit met while computing the oracle distance.
    pub oracle_deficit: Option<f64>,
}

/// Output of a tomography pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    pub estimator: Estimator,
    /// Copies drawn from the source by this run.
    pub copies_used: usize,
    pub epsilon: f64,
    pub delta: f64,
    /// Fock-oracle trace distance between the estimate and the true state.
    pub achieved_distance: Option<f64>,
    pub diagnostics: Diagnostics,
}

// ---------------------------------------------------------------------------
// Gaussian tomography
// ---------------------------------------------------------------------------

/// Moment accuracy `ε′` used for a target trace distance `ε`:
/// `ε²/(2⁷En²)` for mixed states and `ε²/(4nE)` for pure states.
pub fn gaussian_internal_accuracy(n: usize, eps: f64, energy: f64, pure: bool) -> f64 {
    let nf = n as f64;
    if pure {
        eps * eps / (4.0 * nf * energy)
    } else {
        eps * eps / (128.0 * energy * nf * nf)
    }
}

/// Copies sufficient for Gaussian tomography at accuracy `ε`, confidence
/// `1 − δ` and energy per mode `E`:
/// `(n+3)⌈68 ln(2(2n²+3n)/δ)·200(24n²E²+3n)/ε⁴·c⌉` with `c = 2¹⁴E²n⁴`
/// (mixed) or `c = 16E²n²` (pure).
pub fn gaussian_sample_counts(n: usize, eps: f64, delta: f64, energy: f64, pure: bool) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidArgument("mode count must be positive".into()));
    }
    check_accuracy(eps, delta)?;
    check_energy(energy)?;
    let nf = n as f64;
    let e2 = energy * energy;
    let factor = if pure {
        16.0 * e2 * nf * nf
    } else {
        16384.0 * e2 * nf.powi(4)
    };
    let q = 2.0 * nf * nf + 3.0 * nf;
    let per_round = snap_ceil(
        68.0 * (2.0 * q / delta).ln() * 200.0 * (24.0 * nf * nf * e2 + 3.0 * nf) / eps.powi(4)
            * factor,
    );
    if !(per_round < u64::MAX as f64) {
        return Err(Error::InvalidArgument(format!(
            "sample count {per_round:e} overflows a 64-bit integer"
        )));
    }
    (per_round as u64)
        .checked_mul(n as u64 + 3)
        .ok_or_else(|| Error::InvalidArgument("sample count overflows a 64-bit integer".into()))
}

/// Options for [`gaussian_tomography`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTomographyOptions {
    /// Use the pure-state accuracy split.
    pub pure: bool,
    pub moments: MomentOptions,
    /// Skip sampling and use the true moments (plus the nominal regularizer).
    pub exact_moments: bool,
    /// Attach the Fock-oracle distance to the true state.
    pub oracle: bool,
}

impl Default for GaussianTomographyOptions {
    fn default() -> Self {
        Self {
            pure: false,
            moments: MomentOptions::default(),
            exact_moments: false,
            oracle: false,
        }
    }
}

impl GaussianTomographyOptions {
    /// A fixed copy budget with the minimal regularizer and the oracle on.
    pub fn budgeted(copies: usize) -> Self {
        Self {
            moments: MomentOptions::budgeted(copies),
            oracle: true,
            ..Self::default()
        }
    }
}

/// The Gaussian state sharing the source's first moment and covariance
/// matrix.
pub fn gaussianification(source: &StateSource) -> Result<GaussianState<f64>> {
    let (mean, cov) = source.true_moments();
    GaussianState::new(mean, cov)
}

/// Trace distance between a Fock-space state and a Gaussian state, on a
/// common space large enough for both.
pub fn fock_gaussian_distance(
    truth: &FockDensity,
    state: &GaussianState<f64>,
    opts: &OracleOptions,
) -> Result<(f64, f64)> {
    let factor = fock::gaussian_factor_auto(state, truth.space.cutoff(), opts)?;
    let truth = truth.embed(factor.space.cutoff())?;
    let d = fock::trace_distance_exact(&truth, &factor.to_density())?;
    Ok((d.min(1.0), factor.deficit.max(truth.deficit)))
}

/// Truncation budget of the oracle distance attached to a Gaussian
/// estimate. Distances near `√deficit` are otherwise lost in the tail.
const ACHIEVED_DEFICIT: f64 = 1e-8;

/// Learns a Gaussian state from its first moments and covariance matrix.
///
/// Moments are estimated at the internal accuracy of
/// [`gaussian_internal_accuracy`] with second-moment budget `E₂ = √3·E`.
/// An estimate whose mean energy exceeds `2nE` is rejected. Non-Gaussian
/// sources yield their Gaussianification.
pub fn gaussian_tomography<R: Rng + ?Sized>(
    source: &mut StateSource,
    eps: f64,
    delta: f64,
    energy: f64,
    opts: &GaussianTomographyOptions,
    rng: &mut R,
) -> Result<TomographyReport> {
    check_accuracy(eps, delta)?;
    check_energy(energy)?;
    let n = source.n();
    let eps_inner = gaussian_internal_accuracy(n, eps, energy, opts.pure);
    let start = source.copies_consumed();
    let est: MomentEstimate = if opts.exact_moments {
        let (mean, cov) = source.true_moments();
        MomentEstimate::from_exact(mean, cov, eps_inner, delta)
    } else {
        estimate_moments(source, eps_inner, delta, 3f64.sqrt() * energy, &opts.moments, rng)?
    };
    let state = est.to_state()?;
    let budget = 2.0 * n as f64 * energy;
    let estimate_energy = state.mean_energy();
    if estimate_energy > budget {
        return Err(Error::BudgetViolated {
            quantity: "estimated mean energy",
            value: estimate_energy,
            budget,
        });
    }
    let mut diagnostics = Diagnostics {
        moment_epsilon: Some(eps_inner),
        moment_copies: Some(est.samples_used),
        regularizer: Some(est.regularizer),
        min_uncertainty_eigenvalue: Some(est.min_uncertainty_eigenvalue),
        estimate_energy: Some(estimate_energy),
        ..Diagnostics::default()
    };
    let achieved_distance = if opts.oracle {
        let oracle = OracleOptions {
            max_deficit: ACHIEVED_DEFICIT,
            thermal_tail: 0.1 * ACHIEVED_DEFICIT,
            ..OracleOptions::default()
        };
        let (d, deficit) = match source.state() {
            SourceState::Gaussian(g) => {
                let r = fock::gaussian_trace_distance(g, &state, &oracle)?;
                (r.distance, r.deficit)
            }
            SourceState::Fock(rho) => fock_gaussian_distance(rho, &state, &oracle)?,
        };
        diagnostics.oracle_deficit = Some(deficit);
        Some(d)
    } else {
        None
    };
    Ok(TomographyReport {
        estimator: Estimator::Gaussian(state),
        copies_used: source.copies_consumed() - start,
        epsilon: eps,
        delta,
        achieved_distance,
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Finite-dimensional tomography
// ---------------------------------------------------------------------------

/// Options for [`inner_tomography`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    /// Number of measurement bases; defaults to `4d`.
    pub bases: Option<usize>,
    /// Return the input state itself instead of sampling.
    pub exact: bool,
}

/// Output of [`inner_tomography`].
#[derive(Debug, Clone, PartialEq)]
pub struct InnerEstimate {
    /// Unit-trace positive semidefinite estimate.
    pub matrix: DMatrix<C64>,
    /// Leading eigenvector, for pure-state estimates.
    pub vector: Option<DVector<C64>>,
    pub bases: usize,
    pub copies: usize,
}

/// `Σ_b U_b diag(⟨u_bj|X|u_bj⟩) U_b†`, the frame operator of the bases.
fn frame_apply(bases: &[DMatrix<C64>], active: &[bool], x: &DMatrix<C64>) -> DMatrix<C64> {
    let d = x.nrows();
    let mut out = DMatrix::<C64>::zeros(d, d);
    for (u, _) in bases.iter().zip(active).filter(|(_, &a)| a) {
        let y = u.adjoint() * x * u;
        let diag = DMatrix::from_diagonal(&DVector::from_fn(d, |j, _| c(y[(j, j)].re)));
        out += u * diag * u.adjoint();
    }
    out
}

fn hs_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.dotc(b).re
}

/// Tomography of a `d`-dimensional state from `copies` copies.
///
/// Copies are split evenly over a family of Haar-random orthonormal bases
/// (`4d` by default, drawn from `rng`; `d + 1` random bases are only
/// minimally informationally complete and often badly conditioned); each basis is measured with
/// multinomial counts from the exact outcome probabilities. The estimate is
/// the least-squares solution of the linear inversion (conjugate gradients
/// on the frame operator), with negative eigenvalues clipped and the trace
/// renormalized. For `pure` the leading eigenvector is returned as well.
pub fn inner_tomography<R: Rng + ?Sized>(
    rho: &DMatrix<C64>,
    copies: usize,
    pure: bool,
    opts: &InnerOptions,
    rng: &mut R,
) -> Result<InnerEstimate> {
    let d = rho.nrows();
    if d == 0 || rho.ncols() != d {
        return Err(Error::InvalidArgument("inner tomography needs a square state".into()));
    }
    let tr = rho.trace().re;
    if !(tr > 0.0) {
        return Err(Error::InvalidArgument("state has zero trace".into()));
    }
    let rho = rho * c(1.0 / tr);
    if opts.exact {
        return Ok(finish_estimate(rho, pure, 0, copies));
    }
    if copies == 0 {
        return Err(Error::Starvation {
            requested: 1,
            available: 0,
        });
    }
    let l = opts.bases.unwrap_or(4 * d).max(1);
    let bases: Vec<DMatrix<C64>> = (0..l)
        .map(|_| symplectic::random_unitary::<f64, R>(d, rng))
        .collect();
    let mut rhs = DMatrix::<C64>::zeros(d, d);
    let mut active = vec![false; l];
    for (b, u) in bases.iter().enumerate() {
        let shots = copies / l + usize::from(b < copies % l);
        if shots == 0 {
            continue;
        }
        active[b] = true;
        let y = u.adjoint() * &rho * u;
        let probs: Vec<f64> = (0..d).map(|j| y[(j, j)].re).collect();
        let counts = multinomial(shots, &probs, rng);
        let freq = DVector::from_fn(d, |j, _| c(counts[j] as f64 / shots as f64));
        rhs += u * DMatrix::from_diagonal(&freq) * u.adjoint();
    }
    // Conjugate gradients on the positive semidefinite frame operator.
    let mut x = DMatrix::<C64>::zeros(d, d);
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rs = hs_inner(&r, &r);
    let target = 1e-24 * rs.max(f64::MIN_POSITIVE);
    for _ in 0..(4 * d * d).max(50) {
        if rs <= target {
            break;
        }
        let ap = frame_apply(&bases, &active, &p);
        let pap = hs_inner(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rs / pap;
        x += &p * c(alpha);
        r -= &ap * c(alpha);
        let rs_new = hs_inner(&r, &r);
        p = &r + &p * c(rs_new / rs);
        rs = rs_new;
    }
    let x = (&x + x.adjoint()) * c(0.5);
    let eig = x.symmetric_eigen();
    let total: f64 = eig.eigenvalues.iter().map(|&v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("linear-inversion estimate has no positive part".into()));
    }
    let mut clipped = DMatrix::<C64>::zeros(d, d);
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v > 0.0 {
            let col = eig.eigenvectors.column(i);
            clipped += col * col.adjoint() * c(v / total);
        }
    }
    Ok(finish_estimate(clipped, pure, l, copies))
}

fn finish_estimate(matrix: DMatrix<C64>, pure: bool, bases: usize, copies: usize) -> InnerEstimate {
    if !pure {
        return InnerEstimate {
            matrix,
            vector: None,
            bases,
            copies,
        };
    }
    let eig = matrix.symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top).into_owned();
    let v = &v * c(1.0 / v.norm());
    InnerEstimate {
        matrix: &v * v.adjoint(),
        vector: Some(v),
        bases,
        copies,
    }
}

// ---------------------------------------------------------------------------
// Moment-constrained tomography
// ---------------------------------------------------------------------------

/// `⌈n N_phot / (ε/2)^{2/k}⌉`, the projection cutoff for accuracy `ε`.
pub fn projection_cutoff(n: usize, k: u32, eps: f64, photons: f64) -> Result<usize> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument("n and k must be positive".into()));
    }
    if !(eps > 0.0 && eps < 1.0) || !(photons >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need ε in (0, 1) and N_phot ≥ 0, got {eps} and {photons}"
        )));
    }
    let m = snap_ceil(n as f64 * photons / (eps / 2.0).powf(2.0 / k as f64));
    if !(m < 1e15) {
        return Err(Error::InvalidArgument(format!("cutoff {m:e} is out of range")));
    }
    Ok(m as usize)
}

/// Options for [`moment_constrained_tomography`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTomographyOptions {
    pub pure: bool,
    /// Copies drawn from the source.
    pub copies: usize,
    /// Upper limit on the projection cutoff, for desk-scale runs.
    pub max_cutoff: Option<usize>,
    pub inner: InnerOptions,
    pub oracle: bool,
}

impl MomentTomographyOptions {
    pub fn new(copies: usize, pure: bool) -> Self {
        Self {
            pure,
            copies,
            max_cutoff: None,
            inner: InnerOptions::default(),
            oracle: true,
        }
    }
}

/// Tomography of a state with bounded `k`-th photon-number moment
/// `(Tr[N̂^k ρ])^{1/k} ≤ n N_phot`.
///
/// Every copy is measured with `{Π_m, I − Π_m}`; copies in `H_m` are kept and
/// handed to [`inner_tomography`]. A kept fraction below 1/2 is reported as
/// a suspected budget violation.
pub fn moment_constrained_tomography<R: Rng + ?Sized>(
    source: &mut StateSource,
    k: u32,
    eps: f64,
    delta: f64,
    photons: f64,
    opts: &MomentTomographyOptions,
    rng: &mut R,
) -> Result<TomographyReport> {
    check_accuracy(eps, delta)?;
    let rho = match source.state() {
        SourceState::Fock(rho) => rho.clone(),
        SourceState::Gaussian(_) => {
            return Err(Error::InvalidArgument(
                "moment-constrained tomography needs a Fock-space source".into(),
            ))
        }
    };
    let n = rho.space.n();
    let nominal = projection_cutoff(n, k, eps, photons)?;
    let m = nominal
        .min(rho.space.cutoff())
        .min(opts.max_cutoff.unwrap_or(usize::MAX));
    let (projected, weight) = fock::project_energy_subspace(&rho, m)?;
    let retention = (weight / rho.trace()).min(1.0);

    let start = source.copies_consumed();
    source.consume(opts.copies)?;
    let kept = binomial(opts.copies, retention, rng);
    let retained = kept as f64 / opts.copies.max(1) as f64;
    if retained < 0.5 {
        return Err(Error::BudgetViolationSuspected { retained });
    }
    let inner = inner_tomography(&projected.matrix, kept, opts.pure, &opts.inner, rng)?;
    let estimate = DensityEstimate {
        n,
        cutoff: projected.space.cutoff(),
        matrix: inner.matrix.clone(),
        vector: inner.vector.clone(),
    };
    let mut diagnostics = Diagnostics {
        nominal_cutoff: Some(nominal),
        cutoff: Some(projected.space.cutoff()),
        retention_probability: Some(retention),
        retained_fraction: Some(retained),
        inner_dimension: Some(projected.space.dim()),
        inner_copies: Some(kept),
        inner_bases: Some(inner.bases),
        ..Diagnostics::default()
    };
    let achieved_distance = if opts.oracle {
        let truth = rho.normalized();
        let proj = projected.embed(rho.space.cutoff())?;
        diagnostics.projection_distance = Some(fock::trace_distance_exact(&truth, &proj)?);
        let est = estimate.to_density()?.embed(rho.space.cutoff())?;
        diagnostics.oracle_deficit = Some(rho.deficit);
        Some(fock::trace_distance_exact(&truth, &est)?.min(1.0))
    } else {
        None
    };
    Ok(TomographyReport {
        estimator: Estimator::Fock(estimate),
        copies_used: source.copies_consumed() - start,
        epsilon: eps,
        delta,
        achieved_distance,
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Compression utilities
// ---------------------------------------------------------------------------

/// Number of symplectic eigenvalues within `tol` of 1.
pub fn gaussian_dimension(v: &DMatrix<f64>, tol: f64) -> Result<usize> {
    let dec = symplectic::williamson(v)?;
    Ok(dec.d.iter().filter(|&&d| (d - 1.0).abs() <= tol).count())
}

/// Largest photon number in the random head superpositions.
const SYNTH_HEAD_PHOTONS: usize = 2;

/// Truncation deficit allowed for synthetic states.
const SYNTH_DEFICIT: f64 = 1e-11;

/// Extra photons of working space when building synthetic states. The
/// oracle default of 5 truncates the squeezed intermediate states and costs
/// up to ~3e-8 in the density entries at energy cap 4; 25 brings the error
/// to rounding level.
const SYNTH_BUFFER: usize = 25;

/// Random state `G(|φ⟩ ⊗ |0⟩^{n−t})` built from `t` non-Gaussian gates that
/// each act on `kappa` modes.
///
/// Each doping gate is drawn as a Gaussian conjugate `G_j V_j G_j†` of a
/// gate `V_j` acting on a single mode, which is `kappa`-local after the
/// conjugation; the non-Gaussian part of the circuit then fits on `t` head
/// modes. The head `|φ⟩` is a random superposition of Fock states with at
/// most two photons and `G = D_d U_S` is a random Gaussian unitary whose
/// output has total mean energy at most `energy_cap`.
///
/// Returns the state, on the smallest cutoff keeping the truncation deficit
/// below `1e-11`, together with its exact decomposition.
pub fn synth_t_doped<R: Rng + ?Sized>(
    n: usize,
    t: usize,
    kappa: usize,
    rng: &mut R,
    energy_cap: f64,
) -> Result<(FactoredDensity, CompressedEstimate)> {
    if n == 0 || kappa == 0 || t * kappa > n {
        return Err(Error::InvalidArgument(format!(
            "need n ≥ 1, κ ≥ 1 and κt ≤ n; got n = {n}, t = {t}, κ = {kappa}"
        )));
    }
    // Head state and its moments.
    let (head_cutoff, head, head_mean, head_cov) = if t == 0 {
        (0, DVector::from_element(1, c(1.0)), DVector::zeros(0), DMatrix::zeros(0, 0))
    } else {
        let hs = FockSpace::new(t, SYNTH_HEAD_PHOTONS)?;
        let v = DVector::<C64>::from_fn(hs.dim(), |_, _| {
            Complex::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        });
        let v = &v * c(1.0 / v.norm());
        let (m, cov) = FockDensity::from_pure(hs, &v)?.moments();
        (SYNTH_HEAD_PHOTONS, v, m, cov)
    };
    let mut mean0 = DVector::zeros(2 * n);
    let mut cov0 = DMatrix::<f64>::identity(2 * n, 2 * n);
    mean0.rows_mut(0, 2 * t).copy_from(&head_mean);
    cov0.view_mut((0, 0), (2 * t, 2 * t)).copy_from(&head_cov);
    let base = GaussianState::new(mean0, cov0)?;
    if base.mean_energy() > energy_cap {
        return Err(Error::BudgetViolated {
            quantity: "synthetic state energy",
            value: base.mean_energy(),
            budget: energy_cap,
        });
    }

    let mut z_max = 2.0f64;
    let mut shift = 0.5f64;
    let mut chosen = None;
    for _ in 0..64 {
        let s = symplectic::random_symplectic::<f64, R>(n, z_max, rng)?;
        let d = DVector::from_fn(2 * n, |_, _| {
            let x: f64 = StandardNormal.sample(rng);
            shift * x
        });
        let out = base.apply_gaussian_map(&s, &d)?;
        if out.mean_energy() <= energy_cap {
            chosen = Some((s, d, out));
            break;
        }
        z_max = z_max.powf(0.7);
        shift *= 0.7;
    }
    let Some((s, d, out)) = chosen else {
        return Err(Error::BudgetViolated {
            quantity: "synthetic state energy",
            value: base.mean_energy(),
            budget: energy_cap,
        });
    };
    let truth = CompressedEstimate {
        mean: d,
        s,
        head_modes: t,
        head_cutoff,
        head,
    };
    let mut cutoff = fock::initial_cutoff(n, out.mean_photon_number()) + SYNTH_HEAD_PHOTONS;
    loop {
        let space = FockSpace::new(n, cutoff).map_err(|_| Error::Truncation {
            error: f64::NAN,
            budget: SYNTH_DEFICIT,
            suggested_cutoff: cutoff,
        })?;
        let (v, _) = truth.reconstruct(&space, SYNTH_BUFFER)?;
        let deficit = (1.0 - v.norm_squared()).max(0.0);
        if deficit <= SYNTH_DEFICIT {
            let factor = DMatrix::from_column_slice(space.dim(), 1, v.as_slice());
            return Ok((
                FactoredDensity {
                    space,
                    factor,
                    deficit,
                },
                truth,
            ));
        }
        cutoff = cutoff * 3 / 2 + 2;
    }
}

// ---------------------------------------------------------------------------
// t-compressible tomography
// ---------------------------------------------------------------------------

/// Options for [`t_compressible_tomography`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedOptions {
    /// Total copies drawn from the source.
    pub copies: usize,
    /// Share of the copies spent on moment estimation.
    pub moment_fraction: f64,
    pub regularization: Regularization,
    pub bins: Option<usize>,
    /// Upper limit on the head cutoff, for desk-scale runs.
    pub head_cutoff_cap: usize,
    /// Post-selection pass rate below which the run is declared failed.
    pub floor: f64,
    /// Known `(m, S)`; skips moment estimation and gives all copies to the
    /// later stages.
    pub frame: Option<(DVector<f64>, DMatrix<f64>)>,
    pub inner: InnerOptions,
    pub oracle: bool,
}

impl CompressedOptions {
    pub fn new(copies: usize) -> Self {
        Self {
            copies,
            moment_fraction: 0.5,
            regularization: Regularization::Minimal,
            bins: None,
            head_cutoff_cap: 8,
            floor: 0.25,
            frame: None,
            inner: InnerOptions::default(),
            oracle: true,
        }
    }
}

/// Moment accuracy `ε²/(2(n+1)(1+4nE₂)²)` of the first stage.
pub fn compressed_moment_accuracy(n: usize, eps: f64, e2: f64) -> f64 {
    let nf = n as f64;
    eps * eps / (2.0 * (nf + 1.0) * (1.0 + 4.0 * nf * e2).powi(2))
}

/// Tomography of a pure state `D_m U_S (|φ⟩ ⊗ |0⟩^{n−t})`.
///
/// 1. Estimate `(m̃, Ṽ)` from a share of the copies.
/// 2. Williamson `Ṽ = S̃ D̃ S̃ᵀ`, descending, so the head is the first `t`
///    modes.
/// 3. Apply `U_S̃† D_m̃†` to every remaining copy and keep those whose last
///    `n − t` modes are found in the vacuum.
/// 4. Project the head onto `H_m` and run pure-state [`inner_tomography`] on
///    the kept copies, at accuracy `ε/2`.
pub fn t_compressible_tomography<R: Rng + ?Sized>(
    source: &mut StateSource,
    t: usize,
    eps: f64,
    delta: f64,
    e2: f64,
    opts: &CompressedOptions,
    rng: &mut R,
) -> Result<TomographyReport> {
    check_accuracy(eps, delta)?;
    check_energy(e2)?;
    let n = source.n();
    if t > n {
        return Err(Error::InvalidArgument(format!("t = {t} exceeds n = {n}")));
    }
    if !(opts.moment_fraction > 0.0 && opts.moment_fraction < 1.0) && opts.frame.is_none() {
        return Err(Error::InvalidArgument("moment fraction must lie in (0, 1)".into()));
    }
    let nf = n as f64;
    let start = source.copies_consumed();
    let mut diagnostics = Diagnostics::default();

    // Stages 1 and 2.
    let (mean, s) = match &opts.frame {
        Some((m, s)) => (m.clone(), s.clone()),
        None => {
            let eps_cov = compressed_moment_accuracy(n, eps, e2);
            let copies = (opts.copies as f64 * opts.moment_fraction).floor() as usize;
            let mopts = MomentOptions {
                copies: Some(copies),
                regularization: opts.regularization,
                bins: opts.bins,
            };
            let est = estimate_moments(source, eps_cov, delta / 3.0, e2, &mopts, rng)?;
            diagnostics.moment_epsilon = Some(eps_cov);
            diagnostics.moment_copies = Some(est.samples_used);
            diagnostics.regularizer = Some(est.regularizer);
            diagnostics.min_uncertainty_eigenvalue = Some(est.min_uncertainty_eigenvalue);
            let dec = symplectic::williamson(&est.cov)?;
            diagnostics.symplectic_eigenvalues = Some(dec.d.iter().copied().collect());
            (est.mean, dec.s)
        }
    };

    // Stage 3: exact action of U_S̃† D_m̃† on the true state.
    let oracle = OracleOptions::default();
    let truth: FactoredDensity = match (source.fock_factor(), source.state()) {
        (Some(f), _) => f.clone(),
        (None, SourceState::Gaussian(g)) => fock::gaussian_factor_auto(g, 0, &oracle)?,
        (None, SourceState::Fock(rho)) => rho.factor(1e-14),
    };
    let total_weight = truth.trace();
    let work = FockSpace::new(n, truth.space.cutoff() + oracle.buffer)?;
    let mut block = DMatrix::<C64>::zeros(work.dim(), truth.rank());
    block.rows_mut(0, truth.space.dim()).copy_from(&truth.factor);
    let s_inv = symplectic_inverse(&s);
    let shift = -(&s_inv * &mean);
    GaussianCircuit::new(&work, &s_inv, &shift)?.apply(&mut block);
    let tail: Vec<usize> = (t..n).collect();
    let (head_block, head_space_full) = if t == 0 {
        (block.rows(0, 1).into_owned(), None)
    } else if t == n {
        (block, Some(work.clone()))
    } else {
        let (hs, keep) = fock::head_embedding(&work, &tail)?;
        let hb = DMatrix::from_fn(keep.len(), block.ncols(), |i, j| block[(keep[i], j)]);
        (hb, Some(hs))
    };
    let head_weight = head_block.norm_squared();
    let p_pass = (head_weight / total_weight).min(1.0);
    diagnostics.postselection_probability = Some(p_pass);

    let stage3 = opts.copies - (source.copies_consumed() - start);
    source.consume(stage3)?;
    diagnostics.postselection_copies = Some(stage3);
    let passed = if t == n { stage3 } else { binomial(stage3, p_pass, rng) };
    let rate = passed as f64 / stage3.max(1) as f64;
    diagnostics.postselection_rate = Some(rate);
    if rate < opts.floor || passed == 0 {
        return Err(Error::PostSelectionFailed {
            rate,
            floor: opts.floor,
        });
    }

    // Stage 4: head tomography inside H_m of the head modes.
    let (head_cutoff, head) = match head_space_full {
        None => (0, DVector::from_element(1, c(1.0))),
        Some(hs) => {
            let head_rho = FockDensity {
                matrix: &head_block * head_block.adjoint() * c(1.0 / head_weight),
                space: hs.clone(),
                deficit: 0.0,
            };
            diagnostics.head_energy = Some(head_rho.mean_energy());
            let bound = 80.0 * nf * nf * e2 * e2;
            diagnostics.head_energy_bound = Some(bound);
            let photons = (bound - 0.5).max(0.0);
            let nominal = projection_cutoff(t, 1, eps / 2.0, photons)?;
            let m = nominal.min(opts.head_cutoff_cap).min(hs.cutoff());
            diagnostics.nominal_cutoff = Some(nominal);
            diagnostics.cutoff = Some(m);
            let (projected, weight) = fock::project_energy_subspace(&head_rho, m)?;
            let kept = binomial(passed, weight, rng);
            let retained = kept as f64 / passed as f64;
            diagnostics.retention_probability = Some(weight);
            diagnostics.retained_fraction = Some(retained);
            if retained < 0.5 {
                return Err(Error::BudgetViolationSuspected { retained });
            }
            let inner = inner_tomography(&projected.matrix, kept, true, &opts.inner, rng)?;
            diagnostics.inner_dimension = Some(projected.space.dim());
            diagnostics.inner_copies = Some(kept);
            diagnostics.inner_bases = Some(inner.bases);
            (m, inner.vector.expect("pure estimate"))
        }
    };
    let estimate = CompressedEstimate {
        mean,
        s,
        head_modes: t,
        head_cutoff,
        head,
    };

    let achieved_distance = if opts.oracle {
        let (v, leak) = estimate.reconstruct(&truth.space, oracle.buffer)?;
        diagnostics.oracle_deficit = Some(leak.max(truth.deficit));
        Some(distance_to_factor(&truth, &v)?)
    } else {
        None
    };
    Ok(TomographyReport {
        estimator: Estimator::Compressed(estimate),
        copies_used: source.copies_consumed() - start,
        epsilon: eps,
        delta,
        achieved_distance,
        diagnostics,
    })
}

/// Trace distance between `F F†` (unit trace up to its deficit) and the
/// unit vector whose projection onto the space is `v`.
///
/// For a rank-one `F` supported on the space only the projection enters the
/// overlap, so `√(1 − |⟨ψ|v⟩|²)` is exact.
fn distance_to_factor(truth: &FactoredDensity, v: &DVector<C64>) -> Result<f64> {
    if let Some(psi) = truth.pure_vector() {
        let ov = psi.dotc(v).norm_sqr() / psi.norm_squared();
        return Ok((1.0 - ov).max(0.0).sqrt().min(1.0));
    }
    let est = FockDensity::from_pure(truth.space.clone(), v)?;
    Ok(fock::trace_distance_exact(&truth.to_density(), &est)?.min(1.0))
}
