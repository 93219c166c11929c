//! The `(m, V)` data model for Gaussian states.
//!
//! Energy quantities use the energy operator `Ê = RᵀR/2`; photon numbers use
//! `N̂ = Ê − n/2`. Functions name which of the two they return.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, min_eig_hermitian, op_norm, symmetrize};
use crate::symplectic::{self, omega, random_symplectic, DEFAULT_TOL};
use crate::{lit, to_f64, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianState<T: Real> {
    pub n: usize,
    /// First moment `m = Tr[R ρ]`.
    pub mean: DVector<T>,
    /// Covariance matrix, vacuum normalized to the identity.
    pub cov: DMatrix<T>,
}

/// Mean energy and mean photon number of a state, `E = N + n/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget<T: Real> {
    pub energy: T,
    pub photons: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Purity {
    Pure,
    Mixed,
}

/// On-disk schema `{"n": int, "mean": [...], "cov": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateJson {
    pub n: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl<T: Real> GaussianState<T> {
    /// Builds a state from moments, symmetrizing `cov` when its asymmetry is
    /// within [`DEFAULT_TOL`]. The uncertainty relation is not checked; see
    /// [`GaussianState::new_valid`].
    pub fn new(mean: DVector<T>, cov: DMatrix<T>) -> Result<Self> {
        let n = symplectic::mode_count(&cov)?;
        if mean.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: mean.len(),
            });
        }
        let asym = asymmetry(&cov);
        if asym > lit(DEFAULT_TOL) {
            return Err(Error::NotSymmetric {
                asymmetry: to_f64(asym),
                tol: DEFAULT_TOL,
            });
        }
        Ok(Self {
            n,
            mean,
            cov: symmetrize(&cov),
        })
    }

    /// Like [`GaussianState::new`] but rejects covariances violating
    /// `V + iΩ ⪰ −tol`.
    pub fn new_valid(mean: DVector<T>, cov: DMatrix<T>, tol: T) -> Result<Self> {
        let s = Self::new(mean, cov)?;
        let min = s.min_uncertainty_eigenvalue();
        if min < -tol {
            return Err(Error::UncertaintyViolated {
                min_eigenvalue: to_f64(min),
            });
        }
        Ok(s)
    }

    pub fn vacuum(n: usize) -> Self {
        Self {
            n,
            mean: DVector::zeros(2 * n),
            cov: DMatrix::identity(2 * n, 2 * n),
        }
    }

    /// Product of thermal states with mean photon numbers `nu`.
    pub fn thermal(nu: &[T]) -> Result<Self> {
        if nu.is_empty() {
            return Err(Error::InvalidArgument("at least one mode is required".into()));
        }
        if let Some(bad) = nu.iter().find(|x| !(**x >= T::zero())) {
            return Err(Error::InvalidArgument(format!(
                "thermal occupation must be non-negative, got {}",
                to_f64(*bad)
            )));
        }
        let n = nu.len();
        let diag = DVector::from_fn(2 * n, |i, _| lit::<T>(2.0) * nu[i / 2] + T::one());
        Ok(Self {
            n,
            mean: DVector::zeros(2 * n),
            cov: DMatrix::from_diagonal(&diag),
        })
    }

    pub fn coherent(r: DVector<T>) -> Result<Self> {
        if r.is_empty() || r.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "displacement must have even positive length, got {}",
                r.len()
            )));
        }
        let n = r.len() / 2;
        Ok(Self {
            n,
            mean: r,
            cov: DMatrix::identity(2 * n, 2 * n),
        })
    }

    /// Smallest eigenvalue of the Hermitian matrix `V + iΩ`.
    pub fn min_uncertainty_eigenvalue(&self) -> T {
        min_eig_hermitian(&self.cov, &omega(self.n))
    }

    /// True iff `V + iΩ ⪰ −tol`.
    pub fn validate(&self, tol: T) -> Result<bool> {
        if self.cov.nrows() != 2 * self.n || self.cov.ncols() != 2 * self.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n,
                got: self.cov.nrows(),
            });
        }
        if self.mean.len() != 2 * self.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n,
                got: self.mean.len(),
            });
        }
        Ok(self.min_uncertainty_eigenvalue() >= -tol)
    }

    /// `Tr[ρÊ] = TrV/4 + ‖m‖²/2`.
    pub fn mean_energy(&self) -> T {
        self.cov.trace() / lit(4.0) + self.mean.norm_squared() / lit(2.0)
    }

    /// `Tr[ρN̂] = Tr(V − I)/4 + ‖m‖²/2`.
    pub fn mean_photon_number(&self) -> T {
        self.mean_energy() - lit::<T>(self.n as f64) / lit(2.0)
    }

    pub fn energy_budget(&self) -> EnergyBudget<T> {
        EnergyBudget {
            energy: self.mean_energy(),
            photons: self.mean_photon_number(),
        }
    }

    /// `Tr[ρÊ²] = (TrV/4 + ‖m‖²/2)² + Tr(V²)/8 + mᵀVm/2 − n/4`.
    ///
    /// Valid for Gaussian states only.
    pub fn energy_second_moment(&self) -> T {
        let e = self.mean_energy();
        let v2 = (&self.cov * &self.cov).trace();
        let mvm = self.mean.dot(&(&self.cov * &self.mean));
        e * e + v2 / lit(8.0) + mvm / lit(2.0) - lit::<T>(self.n as f64) / lit(4.0)
    }

    /// The Gaussian bound `Tr[ρÊ²] ≤ 3 (Tr[ρÊ])²`.
    pub fn energy_second_moment_bound(&self) -> T {
        let e = self.mean_energy();
        lit::<T>(3.0) * e * e
    }

    /// `m ↦ Sm + d`, `V ↦ SVSᵀ`.
    pub fn apply_gaussian_map(&self, s: &DMatrix<T>, d: &DVector<T>) -> Result<Self> {
        if s.nrows() != 2 * self.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n,
                got: s.nrows(),
            });
        }
        if d.len() != 2 * self.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n,
                got: d.len(),
            });
        }
        let residual = symplectic::symplectic_residual(s)?;
        let tol = lit::<T>(DEFAULT_TOL) * T::one().max(op_norm(s) * op_norm(s));
        if residual > tol {
            return Err(Error::NotSymplectic {
                residual: to_f64(residual),
                tol: to_f64(tol),
            });
        }
        Ok(Self {
            n: self.n,
            mean: s * &self.mean + d,
            cov: symmetrize(&(s * &self.cov * s.transpose())),
        })
    }

    /// Additive Gaussian noise channel: `V ↦ V + K`, first moment unchanged.
    pub fn gaussian_noise(&self, k: &DMatrix<T>) -> Result<Self> {
        if k.nrows() != 2 * self.n || k.ncols() != 2 * self.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n,
                got: k.nrows(),
            });
        }
        let asym = asymmetry(k);
        if asym > lit(DEFAULT_TOL) {
            return Err(Error::NotSymmetric {
                asymmetry: to_f64(asym),
                tol: DEFAULT_TOL,
            });
        }
        let k = symmetrize(k);
        let min = k.clone().symmetric_eigenvalues().min();
        if min < -lit::<T>(DEFAULT_TOL) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: to_f64(min),
            });
        }
        Ok(Self {
            n: self.n,
            mean: self.mean.clone(),
            cov: &self.cov + k,
        })
    }

    /// Marginal on the listed modes (0-based, in the given order).
    pub fn reduced_state(&self, modes: &[usize]) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidArgument("mode set is empty".into()));
        }
        if let Some(&bad) = modes.iter().find(|&&j| j >= self.n) {
            return Err(Error::InvalidArgument(format!(
                "mode {bad} out of range for {} modes",
                self.n
            )));
        }
        let mut seen = vec![false; self.n];
        for &j in modes {
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidArgument(format!("mode {j} listed twice")));
            }
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&j| [2 * j, 2 * j + 1]).collect();
        let k = idx.len();
        Ok(Self {
            n: modes.len(),
            mean: DVector::from_fn(k, |i, _| self.mean[idx[i]]),
            cov: DMatrix::from_fn(k, k, |i, j| self.cov[(idx[i], idx[j])]),
        })
    }

    /// Mean energy of the displaced state: `E(ρ) + rᵀm + ‖r‖²/2`.
    pub fn displacement_energy(&self, r: &DVector<T>) -> Result<T> {
        if r.len() != 2 * self.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n,
                got: r.len(),
            });
        }
        Ok(self.mean_energy() + r.dot(&self.mean) + r.norm_squared() / lit(2.0))
    }

    /// Tensor product `self ⊗ other` (direct sum of moments).
    pub fn tensor(&self, other: &Self) -> Self {
        let n = self.n + other.n;
        let a = 2 * self.n;
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        cov.view_mut((0, 0), (a, a)).copy_from(&self.cov);
        cov.view_mut((a, a), (2 * other.n, 2 * other.n))
            .copy_from(&other.cov);
        let mut mean = DVector::zeros(2 * n);
        mean.rows_mut(0, a).copy_from(&self.mean);
        mean.rows_mut(a, 2 * other.n).copy_from(&other.mean);
        Self { n, mean, cov }
    }

    pub fn to_json(&self) -> StateJson {
        StateJson {
            n: self.n,
            mean: self.mean.iter().map(|&x| to_f64(x)).collect(),
            cov: (0..2 * self.n)
                .map(|i| (0..2 * self.n).map(|j| to_f64(self.cov[(i, j)])).collect())
                .collect(),
        }
    }

    pub fn from_json(j: &StateJson) -> Result<Self> {
        if j.cov.len() != 2 * j.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * j.n,
                got: j.cov.len(),
            });
        }
        if let Some(row) = j.cov.iter().find(|r| r.len() != 2 * j.n) {
            return Err(Error::DimensionMismatch {
                expected: 2 * j.n,
                got: row.len(),
            });
        }
        let cov = DMatrix::from_fn(2 * j.n, 2 * j.n, |r, c| lit::<T>(j.cov[r][c]));
        let mean = DVector::from_iterator(j.mean.len(), j.mean.iter().map(|&x| lit::<T>(x)));
        Self::new(mean, cov)
    }
}

/// Random valid Gaussian state with `mean_energy ≤ energy_cap`.
///
/// The covariance part is `S D Sᵀ` with `S` from [`random_symplectic`] and
/// `d_i` uniform on `[1, d_max]` for mixed states; draws that overshoot the
/// cap are redrawn with narrower squeezing and mixedness ranges. The leftover
/// budget goes to a random displacement.
pub fn random_gaussian_state<T: Real, R: Rng + ?Sized>(
    n: usize,
    energy_cap: T,
    purity: Purity,
    rng: &mut R,
) -> Result<GaussianState<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("mode count must be positive".into()));
    }
    let cap = to_f64(energy_cap);
    let floor = n as f64 / 2.0;
    if !(cap >= floor) {
        return Err(Error::InvalidArgument(format!(
            "energy cap {cap} below the vacuum energy {floor}"
        )));
    }
    let per_mode = cap / n as f64;
    let mut z_max = (2.0 * per_mode + (4.0 * per_mode * per_mode - 1.0).max(0.0).sqrt()).sqrt();
    let mut d_max = 2.0 * per_mode;
    let unit = Uniform::new_inclusive(0.0f64, 1.0).expect("valid range");

    let mut cov = DMatrix::<T>::identity(2 * n, 2 * n);
    for _ in 0..64 {
        let s = random_symplectic::<T, R>(n, lit(z_max.max(1.0)), rng)?;
        let mut diag = DVector::<T>::zeros(2 * n);
        for j in 0..n {
            let dj = match purity {
                Purity::Pure => 1.0,
                Purity::Mixed => 1.0 + (d_max - 1.0).max(0.0) * unit.sample(rng),
            };
            diag[2 * j] = lit(dj);
            diag[2 * j + 1] = lit(dj);
        }
        let candidate = symmetrize(&(&s * DMatrix::from_diagonal(&diag) * s.transpose()));
        if to_f64(candidate.trace()) / 4.0 <= cap {
            cov = candidate;
            break;
        }
        z_max = z_max.powf(0.7);
        d_max = 1.0 + (d_max - 1.0) * 0.7;
    }
    let cov_energy = to_f64(cov.trace()) / 4.0;
    let spare = (cap - cov_energy).max(0.0) * unit.sample(rng) * (1.0 - 1e-12);
    let dir = DVector::<f64>::from_fn(2 * n, |_, _| StandardNormal.sample(rng));
    let norm = dir.norm();
    let radius = (2.0 * spare).sqrt();
    let mean = if norm > 0.0 {
        dir.map(|x| lit::<T>(x / norm * radius))
    } else {
        DVector::zeros(2 * n)
    };
    Ok(GaussianState { n, mean, cov })
}
