//! Closed-form trace-distance bounds between Gaussian states.
//!
//! Norm conventions: `‖Δm‖₂` is Euclidean, `‖ΔV‖₁` the trace norm (sum of
//! singular values), `‖ΔV‖₂` the Hilbert–Schmidt norm and `‖ΔV‖∞` the
//! operator norm (largest singular value).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::linalg::{op_norm, trace_norm};
use crate::symplectic;
use crate::{lit, to_f64, Real};

/// Relative slack allowed when checking a state against a budget.
const BUDGET_SLACK: f64 = 1e-9;

/// Tolerance on `|d_i − 1|` used to decide that a state is pure.
pub const PURITY_TOL: f64 = 1e-6;

/// All four bound values for a pair of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport<T: Real> {
    /// `f(N)(‖Δm‖₂ + √2 √‖ΔV‖₁)`.
    pub upper_mixed: T,
    /// Pure-state bound, present when one of the states is pure.
    pub upper_pure: Option<T>,
    /// `(1/200) min{1, ‖Δm‖₂ / √(4E+1)}`.
    pub lower_from_mean: T,
    /// `(1/200) min{1, ‖ΔV‖₂ / (4E+1)}`.
    pub lower_from_cov: T,
    /// Photon-number budget `N` used by the mixed upper bound.
    pub photon_budget: T,
    /// Energy budget `E` used by the lower bounds and the pure bound.
    pub energy_budget: T,
    /// True when the upper values were clipped to 1.
    pub clipped: bool,
}

impl<T: Real> BoundReport<T> {
    /// Largest of the two lower bounds.
    pub fn lower(&self) -> T {
        self.lower_from_mean.max(self.lower_from_cov)
    }

    /// Smallest available upper bound.
    pub fn upper(&self) -> T {
        match self.upper_pure {
            Some(p) => p.min(self.upper_mixed),
            None => self.upper_mixed,
        }
    }

    /// Copy with the upper values clipped to the trivial bound 1.
    pub fn clipped(&self) -> Self {
        let mut out = self.clone();
        out.upper_mixed = out.upper_mixed.min(T::one());
        out.upper_pure = out.upper_pure.map(|p| p.min(T::one()));
        out.clipped = true;
        out
    }
}

/// Which version of the pure-state bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PureForm<T: Real> {
    /// `½‖ρ−ψ‖₁ ≤ ½ √TrV(ψ) √(‖ΔV‖∞ + 2‖Δm‖₂²)`.
    TraceV,
    /// `½‖ρ−ψ‖₁ ≤ √E √(‖ΔV‖∞ + 2‖Δm‖₂²)` for a shared energy budget `E`.
    Energy(T),
}

/// `f(N) = (√N + √(N+1)) / √2`.
pub fn f_of_n<T: Real>(n: T) -> Result<T> {
    if !(n >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "photon budget must be non-negative, got {}",
            to_f64(n)
        )));
    }
    Ok((n.sqrt() + (n + T::one()).sqrt()) / lit::<T>(2.0).sqrt())
}

fn check_pair<T: Real>(s1: &GaussianState<T>, s2: &GaussianState<T>) -> Result<()> {
    if s1.n != s2.n {
        return Err(Error::DimensionMismatch {
            expected: s1.n,
            got: s2.n,
        });
    }
    Ok(())
}

fn check_budget<T: Real>(quantity: &'static str, value: T, budget: T) -> Result<()> {
    let v = to_f64(value);
    let b = to_f64(budget);
    if !(v <= b + BUDGET_SLACK * b.abs().max(1.0)) {
        return Err(Error::BudgetViolated {
            quantity,
            value: v,
            budget: b,
        });
    }
    Ok(())
}

/// Upper bound for two (possibly mixed) Gaussian states whose mean photon
/// numbers are at most `photons`.
pub fn upper_bound_mixed<T: Real>(
    s1: &GaussianState<T>,
    s2: &GaussianState<T>,
    photons: T,
) -> Result<T> {
    check_pair(s1, s2)?;
    let f = f_of_n(photons)?;
    check_budget("mean photon number", s1.mean_photon_number(), photons)?;
    check_budget("mean photon number", s2.mean_photon_number(), photons)?;
    let dm = (&s1.mean - &s2.mean).norm();
    let dv = trace_norm(&(&s1.cov - &s2.cov));
    Ok(f * (dm + lit::<T>(2.0).sqrt() * dv.sqrt()))
}

/// True when every symplectic eigenvalue of `V` is within `tol` of 1.
pub fn is_pure<T: Real>(state: &GaussianState<T>, tol: T) -> Result<bool> {
    let d = symplectic::symplectic_eigenvalues(&state.cov)?;
    Ok(d.iter().all(|&x| (x - T::one()).abs() <= tol))
}

/// Upper bound on the trace distance between a pure Gaussian `psi` and a
/// state `rho` that is described only through its first two moments.
pub fn upper_bound_pure<T: Real>(
    psi: &GaussianState<T>,
    rho: &GaussianState<T>,
    form: PureForm<T>,
) -> Result<T> {
    check_pair(psi, rho)?;
    if !is_pure(psi, lit(PURITY_TOL))? {
        return Err(Error::InvalidArgument(
            "reference state of the pure bound is not pure".into(),
        ));
    }
    let dm2 = (&psi.mean - &rho.mean).norm_squared();
    let dv = op_norm(&(&psi.cov - &rho.cov));
    let core = (dv + lit::<T>(2.0) * dm2).sqrt();
    match form {
        PureForm::TraceV => Ok(psi.cov.trace().sqrt() * core / lit(2.0)),
        PureForm::Energy(e) => {
            check_budget("mean energy", psi.mean_energy(), e)?;
            check_budget("mean energy", rho.mean_energy(), e)?;
            Ok(e.sqrt() * core)
        }
    }
}

/// Lower bounds `(from_mean, from_cov)` for states with mean energy at most
/// `energy`.
///
/// The photon-number form of the same bound uses `4N + 2n + 1`, which
/// equals `4E + 1` under `E = N + n/2`.
pub fn lower_bounds<T: Real>(
    s1: &GaussianState<T>,
    s2: &GaussianState<T>,
    energy: T,
) -> Result<(T, T)> {
    check_pair(s1, s2)?;
    check_budget("mean energy", s1.mean_energy(), energy)?;
    check_budget("mean energy", s2.mean_energy(), energy)?;
    let h = lit::<T>(4.0) * energy + T::one();
    let scale = lit::<T>(1.0 / 200.0);
    let dm = (&s1.mean - &s2.mean).norm();
    let dv = (&s1.cov - &s2.cov).norm();
    Ok((
        scale * T::one().min(dm / h.sqrt()),
        scale * T::one().min(dv / h),
    ))
}

/// Evaluates every bound under explicit budgets.
///
/// The pure bound is filled in (in its energy form) when either state is
/// pure; the pure state plays the role of `psi`.
pub fn bound_report<T: Real>(
    s1: &GaussianState<T>,
    s2: &GaussianState<T>,
    photons: T,
    energy: T,
) -> Result<BoundReport<T>> {
    let upper_mixed = upper_bound_mixed(s1, s2, photons)?;
    let (lower_from_mean, lower_from_cov) = lower_bounds(s1, s2, energy)?;
    let tol = lit(PURITY_TOL);
    let upper_pure = if is_pure(s1, tol)? {
        Some(upper_bound_pure(s1, s2, PureForm::Energy(energy))?)
    } else if is_pure(s2, tol)? {
        Some(upper_bound_pure(s2, s1, PureForm::Energy(energy))?)
    } else {
        None
    };
    Ok(BoundReport {
        upper_mixed,
        upper_pure,
        lower_from_mean,
        lower_from_cov,
        photon_budget: photons,
        energy_budget: energy,
        clipped: false,
    })
}

/// [`bound_report`] with the budgets set to the larger of the two states'
/// values; the budgets used are recorded in the report.
pub fn bound_report_auto<T: Real>(
    s1: &GaussianState<T>,
    s2: &GaussianState<T>,
) -> Result<BoundReport<T>> {
    check_pair(s1, s2)?;
    let photons = s1.mean_photon_number().max(s2.mean_photon_number()).max(T::zero());
    let energy = s1.mean_energy().max(s2.mean_energy());
    bound_report(s1, s2, photons, energy)
}
