//! Median-of-means estimation and the homodyne moment estimator.
//!
//! [`estimate_moments`] runs the `n + 3` joint-homodyne rounds of
//! [`table2_sample_plan`], forms median-of-means estimates of the first
//! moments and of `W = Tr[ρ{R, Rᵀ}]`, and returns the regularized covariance
//! estimate `Ṽ′ = W̃ − 2m̃m̃ᵀ + λI`.
//!
//! The `{x_j, p_j}` entries come from the rotated round through
//! `{x, p} = 2u² − x² − p²` with `u = (x + p)/√2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::complexity::snap_ceil;
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::linalg::{min_eig_hermitian, symmetrize};
use crate::measurement::{homodyne_joint_sample, table2_sample_plan, Setting, StateSource};
use crate::symplectic::omega;
use crate::{lit, Real};

/// Median of `bins` block averages of `samples`.
///
/// The first `⌊N/bins⌋·bins` samples are used; fewer samples than bins
/// reduce the bin count to the sample count.
pub fn median_of_means<T: Real>(samples: &[T], bins: usize) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("median of means of an empty sample".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("median of means needs at least one bin".into()));
    }
    let bins = bins.min(samples.len());
    let mut means = bin_means(samples, bins);
    median(&mut means)
}

/// Block averages of the first `⌊N/bins⌋·bins` samples.
fn bin_means<T: Real>(samples: &[T], bins: usize) -> Vec<T> {
    let size = samples.len() / bins;
    let inv = T::one() / lit::<T>(size as f64);
    samples
        .chunks_exact(size)
        .take(bins)
        .map(|c| c.iter().fold(T::zero(), |acc, &x| acc + x) * inv)
        .collect()
}

fn median<T: Real>(values: &mut [T]) -> Result<T> {
    if values.iter().any(|v| v != v) {
        return Err(Error::Numerical("NaN in median-of-means input".into()));
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let k = values.len();
    Ok(if k % 2 == 1 {
        values[k / 2]
    } else {
        (values[k / 2 - 1] + values[k / 2]) * lit(0.5)
    })
}

/// Bin count `⌈2 ln(2q/δ)⌉` giving failure probability `δ/q` per quantity,
/// so that `q` estimates hold jointly with probability `1 − δ`.
pub fn mom_bins(quantities: usize, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("δ = {delta} must lie in (0, 1)")));
    }
    let q = quantities.max(1) as f64;
    Ok(snap_ceil(2.0 * (2.0 * q / delta).ln()).max(1.0) as usize)
}

/// Number of quantities estimated by the moment estimator, `2n² + 3n`.
pub fn moment_quantities(n: usize) -> usize {
    2 * n * n + 3 * n
}

/// Copies used by [`estimate_moments`] at nominal accuracy:
/// `(n+3)·⌈68 ln(2(2n²+3n)/δ) · 200(8n²E₂² + 3n)/ε²⌉`.
pub fn moment_sample_count(n: usize, eps: f64, delta: f64, e2: f64) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidArgument("mode count must be positive".into()));
    }
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ε = {eps} and δ = {delta} must lie in (0, 1)"
        )));
    }
    if !(e2 >= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "second-moment budget E₂ = {e2} must be at least 1/2"
        )));
    }
    let nf = n as f64;
    let inner = 68.0 * (2.0 * moment_quantities(n) as f64 / delta).ln() * 200.0
        * (8.0 * nf * nf * e2 * e2 + 3.0 * nf)
        / (eps * eps);
    let per_round = snap_ceil(inner);
    if !(per_round < u64::MAX as f64) {
        return Err(Error::InvalidArgument(format!(
            "sample count {per_round:e} overflows a 64-bit integer"
        )));
    }
    (per_round as u64).checked_mul(n as u64 + 3).ok_or_else(|| {
        Error::InvalidArgument("sample count overflows a 64-bit integer".into())
    })
}

/// Target accuracy of the first moments, `ε / (10 √(8 E₂ n))`.
pub fn mean_error_target(n: usize, eps: f64, e2: f64) -> f64 {
    eps / (10.0 * (8.0 * e2 * n as f64).sqrt())
}

/// How much is added to the diagonal of the raw covariance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    /// `λ = ε/2`, the amount fixed by the nominal analysis.
    Nominal,
    /// `λ = z·σ̂`, where `σ̂` is the Frobenius-norm standard error of `Ṽ`
    /// estimated from the spread of the per-bin covariance matrices. Used
    /// with copy budgets far below the nominal count, where `ε/2` would
    /// swamp the statistical error.
    Empirical { z: f64 },
    /// The smallest `λ ≥ 0` for which `Ṽ + λI + iΩ ⪰ 0`.
    Minimal,
    /// A fixed `λ`.
    Fixed(f64),
}

/// Options for [`estimate_moments`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentOptions {
    /// Total copies to spend; defaults to [`moment_sample_count`].
    pub copies: Option<usize>,
    pub regularization: Regularization,
    /// Median-of-means bins; defaults to [`mom_bins`] over `2n² + 3n`
    /// quantities.
    pub bins: Option<usize>,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            copies: None,
            regularization: Regularization::Nominal,
            bins: None,
        }
    }
}

impl MomentOptions {
    /// A fixed copy budget with the minimal regularizer. If
    /// `‖Ṽ − V‖∞ ≤ η` then `Ṽ + ηI + iΩ ⪰ 0`, so the minimal `λ` never
    /// exceeds `η` and the estimate stays within `2η` of `V`.
    pub fn budgeted(copies: usize) -> Self {
        Self {
            copies: Some(copies),
            regularization: Regularization::Minimal,
            bins: None,
        }
    }
}

/// Unregularized median-of-means estimates plus the per-bin covariance
/// matrices used to gauge their spread.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMoments {
    pub n: usize,
    pub mean: DVector<f64>,
    /// Estimate of `Tr[ρ{R, Rᵀ}]`.
    pub second: DMatrix<f64>,
    /// Covariance matrix assembled from each bin separately.
    pub bin_covariances: Vec<DMatrix<f64>>,
    pub bins: usize,
    pub copies_per_round: usize,
    pub copies_used: usize,
}

impl RawMoments {
    /// `Ṽ = W̃ − 2m̃m̃ᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        symmetrize(&(&self.second - (&self.mean * self.mean.transpose()) * 2.0))
    }

    /// Standard error of `Ṽ` in Frobenius norm from the per-bin spread,
    /// inflated by `π/2` for the median.
    pub fn spread(&self) -> f64 {
        let k = self.bin_covariances.len();
        if k < 2 {
            return f64::INFINITY;
        }
        let avg = self
            .bin_covariances
            .iter()
            .fold(DMatrix::zeros(2 * self.n, 2 * self.n), |acc, v| acc + v)
            / k as f64;
        let ss: f64 = self
            .bin_covariances
            .iter()
            .map(|v| (v - &avg).norm_squared())
            .sum();
        (std::f64::consts::FRAC_PI_2 * ss / (k * (k - 1)) as f64).sqrt()
    }
}

/// Output of the moment estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    /// The regularized covariance estimate `Ṽ′`.
    pub cov: DMatrix<f64>,
    /// The raw estimate `Ṽ` before regularization.
    pub raw_cov: DMatrix<f64>,
    /// The `λ` added to the diagonal.
    pub regularizer: f64,
    pub epsilon_target: f64,
    pub delta_target: f64,
    pub samples_used: usize,
    pub bins: usize,
    /// Smallest eigenvalue of `Ṽ′ + iΩ`.
    pub min_uncertainty_eigenvalue: f64,
    pub uncertainty_ok: bool,
}

/// Slack of the uncertainty check on `Ṽ′ + iΩ`.
pub const UNCERTAINTY_TOL: f64 = 1e-10;

impl MomentEstimate {
    /// The Gaussian state with the estimated moments.
    pub fn to_state(&self) -> Result<GaussianState<f64>> {
        GaussianState::new(self.mean.clone(), self.cov.clone())
    }

    /// The estimate an infinite sample would give: the true moments with
    /// only the `ε/2` regularizer added.
    pub fn from_exact(mean: DVector<f64>, cov: DMatrix<f64>, eps: f64, delta: f64) -> Self {
        let n = mean.len() / 2;
        finalize_covariance(n, mean, symmetrize(&cov), eps / 2.0, eps, delta, 0, 0)
    }
}

/// Adds `λI` to `Ṽ` and evaluates the uncertainty check.
pub fn regularize(v_tilde: &DMatrix<f64>, lambda: f64) -> (DMatrix<f64>, f64) {
    let n = v_tilde.nrows() / 2;
    let v = symmetrize(v_tilde) + DMatrix::<f64>::identity(2 * n, 2 * n) * lambda;
    let min = min_eig_hermitian(&v, &omega(n));
    (v, min)
}

#[allow(clippy::too_many_arguments)]
fn finalize_covariance(
    n: usize,
    mean: DVector<f64>,
    raw_cov: DMatrix<f64>,
    lambda: f64,
    eps: f64,
    delta: f64,
    samples_used: usize,
    bins: usize,
) -> MomentEstimate {
    debug_assert_eq!(raw_cov.nrows(), 2 * n);
    let (cov, min) = regularize(&raw_cov, lambda);
    MomentEstimate {
        mean,
        cov,
        raw_cov,
        regularizer: lambda,
        epsilon_target: eps,
        delta_target: delta,
        samples_used,
        bins,
        min_uncertainty_eigenvalue: min,
        uncertainty_ok: min >= -UNCERTAINTY_TOL,
    }
}

/// Applies the regularization policy to raw estimates.
pub fn finalize(
    raw: &RawMoments,
    eps: f64,
    delta: f64,
    regularization: Regularization,
) -> MomentEstimate {
    let lambda = match regularization {
        Regularization::Nominal => eps / 2.0,
        Regularization::Empirical { z } => z * raw.spread(),
        Regularization::Minimal => {
            let v = raw.covariance();
            (-min_eig_hermitian(&v, &omega(raw.n))).max(0.0)
        }
        Regularization::Fixed(l) => l,
    };
    finalize_covariance(
        raw.n,
        raw.mean.clone(),
        raw.covariance(),
        lambda,
        eps,
        delta,
        raw.copies_used,
        raw.bins,
    )
}

/// Per-bin means of `f(row)` over the usable rows of `shots`.
fn binned<F: Fn(&[f64]) -> f64>(shots: &DMatrix<f64>, bins: usize, f: F) -> Vec<f64> {
    let size = shots.nrows() / bins;
    let mut row = vec![0.0; shots.ncols()];
    (0..bins)
        .map(|b| {
            let mut acc = 0.0;
            for r in b * size..(b + 1) * size {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = shots[(r, j)];
                }
                acc += f(&row);
            }
            acc / size as f64
        })
        .collect()
}

/// Runs the `n + 3` homodyne rounds on `copies` copies and returns the
/// unregularized estimates.
pub fn collect_raw_moments<R: Rng + ?Sized>(
    source: &mut StateSource,
    copies: usize,
    bins: usize,
    rng: &mut R,
) -> Result<RawMoments> {
    let n = source.n();
    let plan = table2_sample_plan(n)?;
    let per_round = copies / plan.len();
    if bins == 0 || per_round < bins {
        return Err(Error::InvalidArgument(format!(
            "{copies} copies give {per_round} per round, fewer than the {bins} median-of-means bins"
        )));
    }
    let x = |i: usize| 2 * i;
    let p = |i: usize| 2 * i + 1;
    // Per-bin estimates of m and W.
    let mut m_bins = vec![DVector::<f64>::zeros(2 * n); bins];
    let mut w_bins = vec![DMatrix::<f64>::zeros(2 * n, 2 * n); bins];
    let mut uu_bins = vec![vec![0.0; n]; bins];
    let set_sym = |w: &mut DMatrix<f64>, a: usize, b: usize, v: f64| {
        w[(a, b)] = v;
        w[(b, a)] = v;
    };
    for setting in &plan {
        let batch = homodyne_joint_sample(source, setting, per_round, rng)?;
        let s = &batch.shots;
        match setting {
            Setting::Positions | Setting::Momenta => {
                let idx: Box<dyn Fn(usize) -> usize> = if *setting == Setting::Positions {
                    Box::new(x)
                } else {
                    Box::new(p)
                };
                for i in 0..n {
                    for (b, v) in binned(s, bins, |r| r[i]).into_iter().enumerate() {
                        m_bins[b][idx(i)] = v;
                    }
                    for j in i..n {
                        for (b, v) in binned(s, bins, |r| 2.0 * r[i] * r[j]).into_iter().enumerate() {
                            set_sym(&mut w_bins[b], idx(i), idx(j), v);
                        }
                    }
                }
            }
            Setting::Rotated => {
                for i in 0..n {
                    for (b, v) in binned(s, bins, |r| r[i] * r[i]).into_iter().enumerate() {
                        uu_bins[b][i] = v;
                    }
                }
            }
            Setting::Mixed { k } => {
                let k = *k;
                for i in (0..n).filter(|&i| i != k) {
                    for (b, v) in binned(s, bins, |r| 2.0 * r[k] * r[i]).into_iter().enumerate() {
                        set_sym(&mut w_bins[b], p(k), x(i), v);
                    }
                }
            }
            _ => unreachable!("plan only contains the fixed rounds"),
        }
    }
    for b in 0..bins {
        for i in 0..n {
            let xx = w_bins[b][(x(i), x(i))];
            let pp = w_bins[b][(p(i), p(i))];
            let v = 2.0 * uu_bins[b][i] - 0.5 * xx - 0.5 * pp;
            set_sym(&mut w_bins[b], x(i), p(i), v);
        }
    }
    let entry_median = |f: &dyn Fn(usize) -> f64| -> Result<f64> {
        let mut vals: Vec<f64> = (0..bins).map(f).collect();
        median(&mut vals)
    };
    let mut mean = DVector::zeros(2 * n);
    for a in 0..2 * n {
        mean[a] = entry_median(&|b| m_bins[b][a])?;
    }
    let mut second = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..2 * n {
        for c in a..2 * n {
            let v = entry_median(&|b| w_bins[b][(a, c)])?;
            set_sym(&mut second, a, c, v);
        }
    }
    let bin_covariances = (0..bins)
        .map(|b| symmetrize(&(&w_bins[b] - (&m_bins[b] * m_bins[b].transpose()) * 2.0)))
        .collect();
    Ok(RawMoments {
        n,
        mean,
        second,
        bin_covariances,
        bins,
        copies_per_round: per_round,
        copies_used: per_round * plan.len(),
    })
}

/// Moment estimation from joint homodyne rounds.
///
/// Spends `opts.copies` copies (default [`moment_sample_count`]) in `n + 3`
/// equal rounds, regularizes according to `opts.regularization`, and fails
/// with [`Error::MomentEstimationFailed`] when `Ṽ′ + iΩ` is not positive
/// semidefinite.
pub fn estimate_moments<R: Rng + ?Sized>(
    source: &mut StateSource,
    eps: f64,
    delta: f64,
    e2: f64,
    opts: &MomentOptions,
    rng: &mut R,
) -> Result<MomentEstimate> {
    let n = source.n();
    let copies = match opts.copies {
        Some(c) => c,
        None => usize::try_from(moment_sample_count(n, eps, delta, e2)?).map_err(|_| {
            Error::InvalidArgument("nominal sample count does not fit in memory".into())
        })?,
    };
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("δ = {delta} must lie in (0, 1)")));
    }
    let bins = match opts.bins {
        Some(b) => b,
        None => mom_bins(moment_quantities(n), delta)?,
    };
    let raw = collect_raw_moments(source, copies, bins, rng)?;
    let est = finalize(&raw, eps, delta, opts.regularization);
    if !est.uncertainty_ok {
        return Err(Error::MomentEstimationFailed {
            min_eigenvalue: est.min_uncertainty_eigenvalue,
        });
    }
    Ok(est)
}
