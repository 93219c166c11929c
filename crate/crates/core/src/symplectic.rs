//! Real symplectic linear algebra on `2n × 2n` matrices.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, op_norm, sym_eigen_desc, symmetrize};
use crate::{lit, to_f64, Real};

/// Default tolerance for structural checks (symmetry, symplecticity).
pub const DEFAULT_TOL: f64 = 1e-8;

/// The canonical symplectic form `Ω_n = ⊕ [[0, 1], [-1, 0]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymplecticForm<T: Real> {
    pub n: usize,
    pub matrix: DMatrix<T>,
}

/// Williamson normal form `V = S D Sᵀ` with `D = diag(d1, d1, ..., dn, dn)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymplecticDecomposition<T: Real> {
    pub s: DMatrix<T>,
    /// Symplectic eigenvalues, sorted in descending order.
    pub d: DVector<T>,
}

/// Bloch–Messiah factorization `S = O1 Z O2` with `Z = ⊕ diag(z_j, 1/z_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerDecomposition<T: Real> {
    pub o1: DMatrix<T>,
    pub o2: DMatrix<T>,
    /// Squeezing factors `z_j ≥ 1`, sorted in descending order.
    pub z: DVector<T>,
}

/// Options for [`williamson_with`].
#[derive(Debug, Clone, Copy)]
pub struct WilliamsonOptions<T: Real> {
    /// Largest tolerated asymmetry before the input is rejected.
    pub symmetry_tol: T,
    /// Inputs whose eigenvalue ratio `λ_min / λ_max` falls below this are
    /// rejected as ill-conditioned.
    pub min_relative_eigenvalue: T,
}

impl<T: Real> Default for WilliamsonOptions<T> {
    fn default() -> Self {
        Self {
            symmetry_tol: lit(DEFAULT_TOL),
            min_relative_eigenvalue: lit(1e-13),
        }
    }
}

pub fn symplectic_form<T: Real>(n: usize) -> Result<SymplecticForm<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("mode count must be positive".into()));
    }
    Ok(SymplecticForm { n, matrix: omega(n) })
}

/// The matrix `Ω_n`; `n = 0` gives the empty matrix.
pub fn omega<T: Real>(n: usize) -> DMatrix<T> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        m[(2 * j, 2 * j + 1)] = T::one();
        m[(2 * j + 1, 2 * j)] = -T::one();
    }
    m
}

pub(crate) fn mode_count<T: Real>(a: &DMatrix<T>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.nrows() == 0 || a.nrows() % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "expected a square matrix of even positive dimension, got {}",
            a.nrows()
        )));
    }
    Ok(a.nrows() / 2)
}

/// `‖SΩSᵀ − Ω‖∞` (spectral norm).
pub fn symplectic_residual<T: Real>(s: &DMatrix<T>) -> Result<T> {
    let n = mode_count(s)?;
    let om = omega::<T>(n);
    Ok(op_norm(&(s * &om * s.transpose() - om)))
}

pub fn is_symplectic<T: Real>(s: &DMatrix<T>, tol: T) -> Result<bool> {
    Ok(symplectic_residual(s)? <= tol)
}

/// Checks symmetry, symmetrizes, and verifies positive definiteness.
pub(crate) fn prepare_covariance<T: Real>(
    v: &DMatrix<T>,
    opts: &WilliamsonOptions<T>,
) -> Result<(DMatrix<T>, DVector<T>, DMatrix<T>)> {
    mode_count(v)?;
    let asym = asymmetry(v);
    if asym > opts.symmetry_tol {
        return Err(Error::NotSymmetric {
            asymmetry: to_f64(asym),
            tol: to_f64(opts.symmetry_tol),
        });
    }
    let v = symmetrize(v);
    let (vals, vecs) = sym_eigen_desc(&v);
    let max = vals[0];
    let min = vals[vals.len() - 1];
    if min <= T::zero() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: to_f64(min),
        });
    }
    if min < opts.min_relative_eigenvalue * max {
        return Err(Error::IllConditioned {
            min_eigenvalue: to_f64(min),
            threshold: to_f64(opts.min_relative_eigenvalue * max),
        });
    }
    Ok((v, vals, vecs))
}

pub fn williamson<T: Real>(v: &DMatrix<T>) -> Result<SymplecticDecomposition<T>> {
    williamson_with(v, &WilliamsonOptions::default())
}

/// Williamson decomposition through the square root `A = V^{1/2}`.
///
/// The antisymmetric matrix `M = AΩA` has eigenvalues `±i d_j`. An orthogonal
/// `O` with `Oᵀ M O = D Ω` gives `S = A O D^{-1/2}`.
///
/// When all symplectic eigenvalues coincide, `S` is only fixed up to a
/// passive factor; the positive choice `S = (V/d)^{1/2}` is returned, so the
/// vacuum gives `S = I`.
pub fn williamson_with<T: Real>(
    v: &DMatrix<T>,
    opts: &WilliamsonOptions<T>,
) -> Result<SymplecticDecomposition<T>> {
    let (_, vals, vecs) = prepare_covariance(v, opts)?;
    let n = vals.len() / 2;
    let a = &vecs * DMatrix::from_diagonal(&vals.map(|x| x.sqrt())) * vecs.transpose();
    let m = &a * omega::<T>(n) * &a;
    let (o, d) = antisymmetric_normal_form(&m)?;
    if d[n - 1] <= T::zero() {
        return Err(Error::Numerical(
            "non-positive symplectic eigenvalue in Williamson decomposition".into(),
        ));
    }
    let mut scale = DVector::zeros(2 * n);
    for j in 0..n {
        let s = T::one() / d[j].sqrt();
        scale[2 * j] = s;
        scale[2 * j + 1] = s;
    }
    if (d[0] - d[n - 1]).abs() <= lit::<T>(1e-10) * d[0] {
        let dm = d.sum() / lit::<T>(n as f64);
        let s = &vecs * DMatrix::from_diagonal(&vals.map(|x| (x / dm).sqrt())) * vecs.transpose();
        return Ok(SymplecticDecomposition { s, d: DVector::from_element(n, dm) });
    }
    let s = a * o * DMatrix::from_diagonal(&scale);
    Ok(SymplecticDecomposition { s, d })
}

/// Orthogonal `O` and descending `d` with `OᵀMO = ⊕ d_j Ω_1` for a real
/// antisymmetric `M`.
///
/// Columns come from the eigenvectors of `MᵀM` (eigenvalues `d_j²`, each
/// twice). Inside a cluster of equal eigenvalues the pairs `(Mu/d, u)` are
/// picked greedily with Gram–Schmidt, so degenerate spectra such as pure
/// states still yield an exactly symplectic basis.
fn antisymmetric_normal_form<T: Real>(m: &DMatrix<T>) -> Result<(DMatrix<T>, DVector<T>)> {
    let dim = m.nrows();
    let n = dim / 2;
    let (vals, vecs) = sym_eigen_desc(&symmetrize(&(m.transpose() * m)));
    let cluster_tol = lit::<T>(1e-10) * vals[0].abs();

    let mut chosen: Vec<DVector<T>> = Vec::with_capacity(dim);
    let mut o = DMatrix::zeros(dim, dim);
    let mut d = DVector::zeros(n);
    let project_out = |x: &mut DVector<T>, basis: &[DVector<T>]| {
        for b in basis {
            let c = b.dot(x);
            x.axpy(-c, b, T::one());
        }
    };
    let mut pair = 0;
    let mut start = 0;
    while start < dim && pair < n {
        let mut stop = start + 1;
        while stop < dim && (vals[start] - vals[stop]).abs() <= cluster_tol {
            stop += 1;
        }
        if (stop - start) % 2 == 1 && stop < dim {
            stop += 1;
        }
        let mut used = vec![false; stop - start];
        for _ in 0..(stop - start) / 2 {
            if pair == n {
                break;
            }
            let mut best: Option<(usize, DVector<T>, T)> = None;
            for (k, flag) in used.iter().enumerate() {
                if *flag {
                    continue;
                }
                let mut u = vecs.column(start + k).into_owned();
                project_out(&mut u, &chosen);
                let norm = u.norm();
                if best.as_ref().map_or(true, |b| norm > b.2) {
                    best = Some((k, u, norm));
                }
            }
            let Some((k, mut u, norm)) = best else { break };
            used[k] = true;
            u /= norm;
            let mut v = m * &u;
            project_out(&mut v, &chosen);
            let dj = v.norm();
            if !(dj > T::zero()) {
                return Err(Error::Numerical(
                    "degenerate antisymmetric form in Williamson decomposition".into(),
                ));
            }
            v /= dj;
            o.set_column(2 * pair, &v);
            o.set_column(2 * pair + 1, &u);
            d[pair] = dj;
            chosen.push(u);
            chosen.push(v);
            pair += 1;
        }
        start = stop;
    }
    if pair < n {
        return Err(Error::Numerical(
            "could not pair the spectrum in Williamson decomposition".into(),
        ));
    }
    Ok((o, d))
}

impl<T: Real> SymplecticDecomposition<T> {
    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// The doubled diagonal `D = diag(d1, d1, ..., dn, dn)`.
    pub fn diagonal(&self) -> DMatrix<T> {
        DMatrix::from_diagonal(&doubled(&self.d))
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        &self.s * self.diagonal() * self.s.transpose()
    }
}

pub(crate) fn doubled<T: Real>(d: &DVector<T>) -> DVector<T> {
    DVector::from_fn(2 * d.len(), |i, _| d[i / 2])
}

/// Symplectic eigenvalues of `V`, sorted in descending order.
pub fn symplectic_eigenvalues<T: Real>(v: &DMatrix<T>) -> Result<DVector<T>> {
    Ok(williamson(v)?.d)
}

/// Bloch–Messiah decomposition from the spectral decomposition of `SSᵀ`.
///
/// Eigenvectors `v` of `SSᵀ` with eigenvalue `z² > 1` are paired with `Ωᵀv`,
/// which has eigenvalue `1/z²`. The eigenspace of `SSᵀ` at 1 is invariant
/// under `Ω` and is split into pairs by a symplectic Gram–Schmidt pass.
pub fn bloch_messiah<T: Real>(s: &DMatrix<T>) -> Result<EulerDecomposition<T>> {
    bloch_messiah_with(s, lit(DEFAULT_TOL))
}

pub fn bloch_messiah_with<T: Real>(s: &DMatrix<T>, tol: T) -> Result<EulerDecomposition<T>> {
    let n = mode_count(s)?;
    let scale = T::one().max(op_norm(s) * op_norm(s));
    let residual = symplectic_residual(s)?;
    if residual > tol * scale {
        return Err(Error::NotSymplectic {
            residual: to_f64(residual),
            tol: to_f64(tol * scale),
        });
    }
    let om = omega::<T>(n);
    let omt = om.transpose();
    let p2 = symmetrize(&(s * s.transpose()));
    let (vals, vecs) = sym_eigen_desc(&p2);

    let cluster = lit::<T>(1e-9).max(tol * lit(1e-1));
    let mut top = 0;
    while top < n && vals[top] > T::one() + cluster {
        top += 1;
    }

    let mut o1 = DMatrix::zeros(2 * n, 2 * n);
    let mut z = DVector::from_element(n, T::one());
    for j in 0..top {
        let v = vecs.column(j).into_owned();
        z[j] = vals[j].sqrt();
        o1.set_column(2 * j, &v);
        o1.set_column(2 * j + 1, &(&omt * &v));
    }

    // Symplectic Gram–Schmidt on the unit-eigenvalue block.
    let mut chosen: Vec<DVector<T>> = Vec::with_capacity(2 * n);
    for j in 0..top {
        chosen.push(o1.column(2 * j).into_owned());
        chosen.push(o1.column(2 * j + 1).into_owned());
    }
    let mut pair = top;
    let candidates = (top..(2 * n - top)).map(|c| vecs.column(c).into_owned());
    for mut u in candidates {
        if pair == n {
            break;
        }
        for c in &chosen {
            let proj = c.dot(&u);
            u -= c * proj;
        }
        let norm = u.norm();
        if norm < lit(1e-6) {
            continue;
        }
        u /= norm;
        let w = &omt * &u;
        o1.set_column(2 * pair, &u);
        o1.set_column(2 * pair + 1, &w);
        chosen.push(u);
        chosen.push(w);
        pair += 1;
    }
    if pair != n {
        return Err(Error::Numerical(
            "Bloch–Messiah: could not complete a symplectic basis".into(),
        ));
    }
    let zinv = DMatrix::from_diagonal(&DVector::from_fn(2 * n, |i, _| {
        if i % 2 == 0 {
            T::one() / z[i / 2]
        } else {
            z[i / 2]
        }
    }));
    let o2 = zinv * o1.transpose() * s;
    Ok(EulerDecomposition { o1, o2, z })
}

impl<T: Real> EulerDecomposition<T> {
    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// `Z = ⊕ diag(z_j, 1/z_j)`.
    pub fn z_matrix(&self) -> DMatrix<T> {
        squeezing_matrix(&self.z)
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        &self.o1 * self.z_matrix() * &self.o2
    }
}

pub fn squeezing_matrix<T: Real>(z: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_diagonal(&DVector::from_fn(2 * z.len(), |i, _| {
        if i % 2 == 0 {
            z[i / 2]
        } else {
            T::one() / z[i / 2]
        }
    }))
}

/// Orthogonal symplectic matrix of the passive transformation `a ↦ u a`.
///
/// With `u = X + iY`, mode block `(j, k)` is `[[X_jk, −Y_jk], [Y_jk, X_jk]]`.
pub fn passive_from_unitary<T: Real>(u: &DMatrix<Complex<T>>) -> DMatrix<T> {
    let n = u.nrows();
    let mut o = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for k in 0..n {
            let (x, y) = (u[(j, k)].re, u[(j, k)].im);
            o[(2 * j, 2 * k)] = x;
            o[(2 * j, 2 * k + 1)] = -y;
            o[(2 * j + 1, 2 * k)] = y;
            o[(2 * j + 1, 2 * k + 1)] = x;
        }
    }
    o
}

/// Inverse of [`passive_from_unitary`]; assumes `o` is orthogonal and symplectic.
pub fn unitary_from_passive<T: Real>(o: &DMatrix<T>) -> DMatrix<Complex<T>> {
    let n = o.nrows() / 2;
    DMatrix::from_fn(n, n, |j, k| Complex::new(o[(2 * j, 2 * k)], o[(2 * j + 1, 2 * k)]))
}

fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let x: f64 = StandardNormal.sample(rng);
    lit(x)
}

/// Haar-random `n × n` unitary (QR of a complex Ginibre matrix with the
/// phases of `R` absorbed into `Q`).
pub fn random_unitary<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<Complex<T>> {
    let half = lit::<T>(0.5).sqrt();
    let g = DMatrix::from_fn(n, n, |_, _| {
        Complex::new(normal::<T, R>(rng) * half, normal::<T, R>(rng) * half)
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let a = nalgebra::ComplexField::modulus(d);
        let phase = if a > T::zero() {
            d / Complex::new(a, T::zero())
        } else {
            Complex::new(T::one(), T::zero())
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random symplectic matrix `O1 Z O2` with Haar-random passive factors and
/// squeezing factors drawn log-uniformly from `[1, z_max]`.
pub fn random_symplectic<T: Real, R: Rng + ?Sized>(
    n: usize,
    z_max: T,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("mode count must be positive".into()));
    }
    if !(z_max >= T::one()) {
        return Err(Error::InvalidArgument(format!(
            "z_max must be at least 1, got {}",
            to_f64(z_max)
        )));
    }
    let o1 = passive_from_unitary(&random_unitary::<T, R>(n, rng));
    let o2 = passive_from_unitary(&random_unitary::<T, R>(n, rng));
    let log_max = to_f64(z_max).ln();
    let unit = Uniform::new_inclusive(0.0f64, 1.0).expect("valid range");
    let z = DVector::from_fn(n, |_, _| lit::<T>((unit.sample(rng) * log_max).exp()));
    Ok(o1 * squeezing_matrix(&z) * o2)
}

/// `‖S‖∞ ≤ √‖V‖∞` for the Williamson symplectic matrix of `V`.
pub fn symplectic_norm_bound_check<T: Real>(v: &DMatrix<T>) -> Result<bool> {
    let dec = williamson(v)?;
    let lhs = op_norm(&dec.s);
    let rhs = op_norm(&symmetrize(v)).sqrt();
    Ok(lhs <= rhs * (T::one() + lit(1e-10)))
}

/// Condition number `K(V) = ‖V‖∞ ‖V⁻¹‖∞` of a positive definite matrix.
pub fn condition_number<T: Real>(v: &DMatrix<T>) -> Result<T> {
    let (_, vals, _) = prepare_covariance(v, &WilliamsonOptions::default())?;
    Ok(vals[0] / vals[vals.len() - 1])
}

/// Left and right sides of the symplectic-spectrum perturbation inequality
/// `‖D1 − D2‖∞ ≤ √(K(V1) K(V2)) ‖V1 − V2‖∞`.
pub fn spectrum_perturbation<T: Real>(v1: &DMatrix<T>, v2: &DMatrix<T>) -> Result<(T, T)> {
    let d1 = symplectic_eigenvalues(v1)?;
    let d2 = symplectic_eigenvalues(v2)?;
    if d1.len() != d2.len() {
        return Err(Error::DimensionMismatch {
            expected: d1.len(),
            got: d2.len(),
        });
    }
    let lhs = (d1 - d2).amax();
    let rhs = (condition_number(v1)? * condition_number(v2)?).sqrt() * op_norm(&(v1 - v2));
    Ok((lhs, rhs))
}

/// `ΩVΩᵀ`, which equals `V⁻¹` exactly when `V` is a pure-state covariance.
pub fn omega_conjugate<T: Real>(v: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = mode_count(v)?;
    let om = omega::<T>(n);
    Ok(&om * v * om.transpose())
}

