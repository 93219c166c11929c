//! Sample-complexity formulas, effective dimensions and ranks.
//!
//! Large powers are evaluated in the log domain so that bound tables survive
//! `n` up to a few dozen modes; values that leave the `f64` range saturate to
//! `+∞` and are flagged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ceiling that ignores last-bit rounding noise, so that for example
/// `3 / 0.1 = 30.000000000000004` maps to 30. The tolerance is relative
/// (`1e-13`, a few hundred ulps) so that large counts keep their fractional
/// part.
pub fn snap_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-13 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Bosonic entropy `g(x) = (x+1)log₂(x+1) − x log₂x`, with `g(0) = 0`.
pub fn bosonic_entropy(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bosonic entropy needs a finite x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * (x + 1.0).log2() - x * x.log2())
}

/// Binary entropy `H₂(x)` with `H₂(0) = H₂(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "binary entropy needs x in [0, 1], got {x}"
        )));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(x) + term(1.0 - x))
}

/// `C(m+n, n)` computed exactly when it fits in `u128`.
pub fn binomial_exact(m: u64, n: u64) -> Option<u128> {
    let mut c: u128 = 1;
    for i in 1..=n as u128 {
        // c·(m+i) is divisible by i because c·(m+i)/i = C(m+i, i).
        c = c.checked_mul(m as u128 + i)? / i;
    }
    Some(c)
}

/// `C(m+n, n)` as a float, saturating to `+∞`.
pub fn binomial_f64(m: f64, n: u64) -> f64 {
    let mut c = 1.0f64;
    for i in 1..=n {
        c = c * (m + i as f64) / i as f64;
    }
    c
}

/// A photon-number cutoff together with the dimension of the space below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffDimension {
    /// Number of modes.
    pub n: usize,
    /// Photon-number cutoff `m`.
    pub m: f64,
    /// `C(m+n, n)`; `+∞` when saturated.
    pub dim: f64,
    /// The closed-form ceiling `(e N_phot / ε^{p} + 2e)^n`.
    pub ceiling: f64,
    /// True when `dim` could not be represented exactly.
    pub saturated: bool,
}

impl CutoffDimension {
    /// `dim` as an integer, when it is exactly representable.
    pub fn dim_exact(&self) -> Option<u128> {
        if self.saturated {
            return None;
        }
        binomial_exact(self.m as u64, self.n as u64)
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "{name} must lie in (0, 1), got {x}"
        )));
    }
    Ok(())
}

fn check_common(n: usize, k: u32, photons: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("mode count must be positive".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("moment order k must be positive".into()));
    }
    if !(photons > 0.0) || !photons.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "photon budget must be positive, got {photons}"
        )));
    }
    Ok(())
}

fn cutoff_dimension(n: usize, photons: f64, eps_pow: f64) -> CutoffDimension {
    let m = snap_ceil(n as f64 * photons / eps_pow);
    let exact = if m <= u64::MAX as f64 {
        binomial_exact(m as u64, n as u64)
    } else {
        None
    };
    let dim = match exact {
        Some(c) => c as f64,
        None => binomial_f64(m, n as u64),
    };
    let e = std::f64::consts::E;
    let ceiling = (n as f64 * (e * photons / eps_pow + 2.0 * e).ln()).exp();
    CutoffDimension {
        n,
        m,
        dim,
        ceiling,
        saturated: exact.is_none(),
    }
}

/// Effective dimension: `m = ⌈n N_phot / ε^{2/k}⌉` and `dim H_m = C(m+n, n)`.
pub fn effective_dimension(n: usize, k: u32, eps: f64, photons: f64) -> Result<CutoffDimension> {
    check_common(n, k, photons)?;
    check_unit("epsilon", eps)?;
    Ok(cutoff_dimension(n, photons, eps.powf(2.0 / k as f64)))
}

/// Effective rank: `m′ = ⌈n N_phot / ε^{1/k}⌉` and `r = C(m′+n, n)`.
pub fn effective_rank(n: usize, k: u32, eps: f64, photons: f64) -> Result<CutoffDimension> {
    check_common(n, k, photons)?;
    check_unit("epsilon", eps)?;
    Ok(cutoff_dimension(n, photons, eps.powf(1.0 / k as f64)))
}

/// `max(1, [a·(1−δ)·base^p − rest] / denom)`, with the clamp also applied
/// when `base ≤ 0` or the result is not a number.
fn clamped_lower(coef: f64, base: f64, power: f64, rest: f64, denom: f64) -> f64 {
    if !(base > 0.0) || !(denom > 0.0) {
        return 1.0;
    }
    let lead = (coef.ln() + power * base.ln()).exp();
    let v = (lead - rest) / denom;
    if v.is_nan() {
        1.0
    } else {
        v.max(1.0)
    }
}

/// Copies needed by any learner of pure states with bounded `k`-th moment.
pub fn lower_bound_pure(n: usize, k: u32, eps: f64, delta: f64, photons: f64) -> Result<f64> {
    check_common(n, k, photons)?;
    check_unit("epsilon", eps)?;
    check_unit("delta", delta)?;
    let nf = n as f64;
    let base = photons / (12.0 * eps).powf(2.0 / k as f64) - 1.0 / nf;
    let rest = (1.0 - delta) * (32.0 * std::f64::consts::PI).log2() + binary_entropy(delta)?;
    let denom = nf * bosonic_entropy(photons)?;
    Ok(clamped_lower(2.0 * (1.0 - delta), base, nf, rest, denom))
}

/// Copies needed by any learner of mixed states with bounded `k`-th moment.
pub fn lower_bound_mixed(n: usize, k: u32, eps: f64, delta: f64, photons: f64) -> Result<f64> {
    check_common(n, k, photons)?;
    check_unit("epsilon", eps)?;
    check_unit("delta", delta)?;
    let nf = n as f64;
    let base = photons / (16.0 * eps).powf(1.0 / k as f64) - 1.0 / nf;
    let rest = 0.5 * (1.0 - delta) + 2.0 * binary_entropy(delta)?;
    let denom = 2.0 * nf * bosonic_entropy(photons)?;
    Ok(clamped_lower(1.0 - delta, base, 2.0 * nf, rest, denom))
}

/// Copies needed by any learner of `t`-compressible pure states with
/// `√Tr[Ê²ψ] ≤ nE`.
pub fn lower_bound_t_compressible(n: usize, t: usize, eps: f64, delta: f64, energy: f64) -> Result<f64> {
    if t == 0 || t > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= t <= n, got t = {t}, n = {n}"
        )));
    }
    if !(energy > 0.5) || !energy.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "energy budget must exceed 1/2, got {energy}"
        )));
    }
    check_unit("epsilon", eps)?;
    check_unit("delta", delta)?;
    let tf = t as f64;
    let x = n as f64 / tf * (energy - 0.5);
    let base = x / (12.0 * eps) - 1.0 / tf;
    let rest = (1.0 - delta) * (32.0 * std::f64::consts::PI).log2() + binary_entropy(delta)?;
    let denom = tf * bosonic_entropy(x)?;
    Ok(clamped_lower(2.0 * (1.0 - delta), base, tf, rest, denom))
}

/// A ceilinged sample count that may exceed the integer range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleCount {
    /// The ceilinged count as a float (`+∞` when saturated).
    pub value: f64,
    /// True when the count exceeds `u64::MAX`.
    pub saturated: bool,
}

impl SampleCount {
    pub fn from_f64(x: f64) -> Self {
        let value = snap_ceil(x);
        Self {
            value,
            saturated: !(value <= u64::MAX as f64),
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        (!self.saturated).then_some(self.value as u64)
    }
}

/// Copies sufficient for the moment-constrained learner.
///
/// Pure: `⌈2²¹ d_eff / ε² · ln(4/δ)⌉`. Mixed: `⌈2²¹ r_eff d_eff / ε² · ln(4/δ)⌉`
/// with `r_eff` taken at accuracy `ε/20` and capped at `d_eff`, since no
/// state on `H_m` has rank above its dimension.
pub fn upper_bound_counts(
    n: usize,
    k: u32,
    eps: f64,
    delta: f64,
    photons: f64,
    pure: bool,
) -> Result<SampleCount> {
    check_unit("delta", delta)?;
    let d = effective_dimension(n, k, eps, photons)?;
    let mut log_count = 21.0 * 2f64.ln() + d.dim.ln() - 2.0 * eps.ln() + (4.0 / delta).ln().ln();
    if !pure {
        let r = effective_rank(n, k, eps / 20.0, photons)?;
        log_count += r.dim.min(d.dim).ln();
    }
    Ok(SampleCount::from_f64(log_count.exp()))
}

/// Parameters of one bound-table row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub n: usize,
    pub k: u32,
    pub eps: f64,
    pub delta: f64,
    /// Photon budget `N_phot` per mode.
    pub photons: f64,
    /// Compressibility `t` for the t-compressible lower bound.
    pub t: Option<usize>,
    /// Locality `κ` of the non-Gaussian gates, recorded for the table.
    pub kappa: Option<usize>,
}

/// Every formula evaluated at one [`BoundQuery`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub query: BoundQuery,
    pub effective_dimension: CutoffDimension,
    pub effective_rank: CutoffDimension,
    pub lower_pure: f64,
    pub lower_mixed: f64,
    pub upper_pure: SampleCount,
    pub upper_mixed: SampleCount,
    /// Evaluated with the energy budget `E = N_phot + 1/2` per mode.
    pub lower_t_compressible: Option<f64>,
}

impl BoundQuery {
    pub fn evaluate(&self) -> Result<BoundRow> {
        let q = *self;
        let lower_t_compressible = match q.t {
            Some(t) => Some(lower_bound_t_compressible(q.n, t, q.eps, q.delta, q.photons + 0.5)?),
            None => None,
        };
        Ok(BoundRow {
            query: q,
            effective_dimension: effective_dimension(q.n, q.k, q.eps, q.photons)?,
            effective_rank: effective_rank(q.n, q.k, q.eps, q.photons)?,
            lower_pure: lower_bound_pure(q.n, q.k, q.eps, q.delta, q.photons)?,
            lower_mixed: lower_bound_mixed(q.n, q.k, q.eps, q.delta, q.photons)?,
            upper_pure: upper_bound_counts(q.n, q.k, q.eps, q.delta, q.photons, true)?,
            upper_mixed: upper_bound_counts(q.n, q.k, q.eps, q.delta, q.photons, false)?,
            lower_t_compressible,
        })
    }
}
