//! Truncated Fock-space oracle.
//!
//! States live on `H_m`, the span of the `n`-mode Fock states with total
//! photon number at most `m`. Basis vectors are ordered by total photon
//! number and, inside each sector, in descending lexicographic order, so
//! `H_{m'}` for `m' ≤ m` is always a prefix of the basis.
//!
//! Gaussian unitaries are never exponentiated as a whole. A symplectic
//! matrix is split as `S = O1 Z O2`; each passive factor is block-diagonal
//! over photon-number sectors and is exponentiated sector by sector, while
//! squeezers and displacements are single-mode matrices applied along the
//! one-dimensional fibers of the basis. Work happens in a slightly larger
//! space `H_W`, and every bit of weight pushed past `W` is accounted for.

use std::ops::Range;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::symplectic::{self, unitary_from_passive};
use crate::C64;

/// Largest Hilbert-space dimension the oracle will allocate.
pub const MAX_DIM: usize = 20_000;

const HERMITIAN_TOL: f64 = 1e-10;

fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Largest entry modulus of a complex matrix.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// The truncated space `H_m` for `n` modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockSpace {
    n: usize,
    cutoff: usize,
    /// Flattened multi-indices, `n` entries per basis state.
    basis: Vec<usize>,
    /// `sector_start[s]` is the index of the first state with total `s`;
    /// the last entry equals the dimension.
    sector_start: Vec<usize>,
    /// `binom[a][b] = C(a, b)` for `a ≤ cutoff + n`, `b ≤ n`.
    binom: Vec<Vec<usize>>,
}

impl FockSpace {
    pub fn new(n: usize, cutoff: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("mode count must be positive".into()));
        }
        let dim = crate::complexity::binomial_exact(cutoff as u64, n as u64)
            .filter(|&d| d <= MAX_DIM as u128)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "Fock space with {n} modes and cutoff {cutoff} exceeds {MAX_DIM} states"
                ))
            })? as usize;

        let top = cutoff + n;
        let mut binom = vec![vec![0usize; n + 1]; top + 1];
        for a in 0..=top {
            binom[a][0] = 1;
            for b in 1..=n.min(a) {
                binom[a][b] = binom[a - 1][b - 1] + if b <= a - 1 { binom[a - 1][b] } else { 0 };
            }
        }

        let mut basis = Vec::with_capacity(dim * n);
        let mut sector_start = Vec::with_capacity(cutoff + 2);
        let mut k = vec![0usize; n];
        for s in 0..=cutoff {
            sector_start.push(basis.len() / n);
            // First composition of s in descending lexicographic order.
            k.iter_mut().for_each(|x| *x = 0);
            k[0] = s;
            loop {
                basis.extend_from_slice(&k);
                if !prev_composition(&mut k) {
                    break;
                }
            }
        }
        sector_start.push(basis.len() / n);
        debug_assert_eq!(basis.len(), dim * n);
        Ok(Self {
            n,
            cutoff,
            basis,
            sector_start,
            binom,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.sector_start[self.cutoff + 1]
    }

    /// Occupation numbers of basis state `i`.
    pub fn state(&self, i: usize) -> &[usize] {
        &self.basis[i * self.n..(i + 1) * self.n]
    }

    /// Total photon number of basis state `i`.
    pub fn total(&self, i: usize) -> usize {
        self.state(i).iter().sum()
    }

    /// Basis indices of the photon-number sector `s`.
    pub fn sector(&self, s: usize) -> Range<usize> {
        self.sector_start[s]..self.sector_start[s + 1]
    }

    /// Dimension of `H_{m'}` for `m' ≤ cutoff`, i.e. the prefix length.
    pub fn prefix_dim(&self, m: usize) -> usize {
        self.sector_start[m.min(self.cutoff) + 1]
    }

    /// Position of the multi-index `k`, if it lies in the space.
    pub fn index_of(&self, k: &[usize]) -> Option<usize> {
        if k.len() != self.n {
            return None;
        }
        let s: usize = k.iter().sum();
        if s > self.cutoff {
            return None;
        }
        // States of the same total with a larger leading entry come first;
        // their count follows from the hockey-stick identity.
        let mut rank = self.sector_start[s];
        let mut remaining = s;
        for (i, &ki) in k.iter().enumerate() {
            let parts = self.n - i;
            if parts >= 2 && remaining > ki {
                rank += self.binom[remaining - ki + parts - 2][parts - 1];
            }
            remaining -= ki;
        }
        Some(rank)
    }

    /// One-dimensional fibers along mode `j`: for every configuration of the
    /// other modes, the indices of `k_j = 0, 1, ...` up to the cutoff.
    pub fn fibers(&self, j: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut k = vec![0usize; self.n];
        for i in 0..self.dim() {
            let st = self.state(i);
            if st[j] != 0 {
                continue;
            }
            k.copy_from_slice(st);
            let room = self.cutoff - self.total(i);
            let mut fiber = Vec::with_capacity(room + 1);
            for t in 0..=room {
                k[j] = t;
                fiber.push(self.index_of(&k).expect("state inside the space"));
            }
            out.push(fiber);
        }
        out
    }

    /// Number-operator eigenvalues `Σ k_i` on the basis.
    pub fn number_diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| self.total(i) as f64)
    }

    /// Energy eigenvalues `Σ k_i + n/2` on the basis.
    pub fn energy_diagonal(&self) -> DVector<f64> {
        let half = self.n as f64 / 2.0;
        DVector::from_fn(self.dim(), |i, _| self.total(i) as f64 + half)
    }
}

/// Steps `k` to the previous composition in lexicographic order with the
/// same sum; returns false after the last one.
fn prev_composition(k: &mut [usize]) -> bool {
    let n = k.len();
    if n < 2 {
        return false;
    }
    // Rightmost position (excluding the last) holding a positive entry.
    let Some(i) = (0..n - 1).rev().find(|&i| k[i] > 0) else {
        return false;
    };
    let tail: usize = k[i + 1..].iter().sum();
    k[i] -= 1;
    k[i + 1] = tail + 1;
    for x in &mut k[i + 2..] {
        *x = 0;
    }
    true
}

/// Truncated annihilation operator of mode `j`.
pub fn annihilation(space: &FockSpace, j: usize) -> DMatrix<C64> {
    let d = space.dim();
    let mut a = DMatrix::zeros(d, d);
    let mut k = vec![0usize; space.n()];
    for col in 0..d {
        k.copy_from_slice(space.state(col));
        if k[j] == 0 {
            continue;
        }
        let amp = (k[j] as f64).sqrt();
        k[j] -= 1;
        let row = space.index_of(&k).expect("lowered state inside the space");
        a[(row, col)] = c(amp);
    }
    a
}

/// `x̂_j = (a_j + a_j†)/√2` and `p̂_j = (a_j − a_j†)/(i√2)`, ordered
/// `(x1, p1, ..., xn, pn)`.
pub fn quadrature_operators(space: &FockSpace) -> Vec<DMatrix<C64>> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(2 * space.n());
    for j in 0..space.n() {
        let a = annihilation(space, j);
        let ad = a.adjoint();
        out.push((&a + &ad) * c(r));
        out.push((&a - &ad) * Complex::new(0.0, -r));
    }
    out
}

/// A density matrix on a truncated space.
///
/// `deficit` records the weight lost to truncation while the matrix was
/// built; unnormalized projections keep `Tr ρ = 1 − deficit`.
#[derive(Debug, Clone)]
pub struct FockDensity {
    pub space: FockSpace,
    pub matrix: DMatrix<C64>,
    pub deficit: f64,
}

impl FockDensity {
    /// Wraps a matrix after checking shape, hermiticity and trace.
    pub fn new(space: FockSpace, matrix: DMatrix<C64>) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: matrix.nrows(),
            });
        }
        let asym = max_abs(&(&matrix - matrix.adjoint()));
        if asym > HERMITIAN_TOL {
            return Err(Error::NotSymmetric {
                asymmetry: asym,
                tol: HERMITIAN_TOL,
            });
        }
        let tr = matrix.trace().re;
        if !(tr > 0.0 && tr <= 1.0 + 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace {tr} outside (0, 1]"
            )));
        }
        Ok(Self {
            deficit: (1.0 - tr).max(0.0),
            space,
            matrix,
        })
    }

    /// `|ψ⟩⟨ψ|` for a vector on the space; the vector is used as given.
    pub fn from_pure(space: FockSpace, psi: &DVector<C64>) -> Result<Self> {
        if psi.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: psi.len(),
            });
        }
        let norm2 = psi.norm_squared();
        let matrix = psi * psi.adjoint();
        Ok(Self {
            deficit: (1.0 - norm2).max(0.0),
            space,
            matrix,
        })
    }

    /// The Fock state `|k⟩⟨k|`.
    pub fn fock_state(space: FockSpace, k: &[usize]) -> Result<Self> {
        let i = space.index_of(k).ok_or_else(|| {
            Error::InvalidArgument(format!("Fock state {k:?} is outside the space"))
        })?;
        let mut psi = DVector::zeros(space.dim());
        psi[i] = c(1.0);
        Self::from_pure(space, &psi)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Copy rescaled to unit trace.
    pub fn normalized(&self) -> Self {
        let t = self.trace();
        Self {
            space: self.space.clone(),
            matrix: &self.matrix * c(1.0 / t),
            deficit: self.deficit,
        }
    }

    /// The same operator on `H_cutoff`, `cutoff ≥` the current one, padded
    /// with zeros.
    pub fn embed(&self, cutoff: usize) -> Result<Self> {
        if cutoff < self.space.cutoff() {
            return Err(Error::InvalidArgument(format!(
                "cannot embed a cutoff-{} state into cutoff {cutoff}",
                self.space.cutoff()
            )));
        }
        let space = FockSpace::new(self.space.n(), cutoff)?;
        let d = self.space.dim();
        let mut matrix = DMatrix::zeros(space.dim(), space.dim());
        matrix.view_mut((0, 0), (d, d)).copy_from(&self.matrix);
        Ok(Self {
            space,
            matrix,
            deficit: self.deficit,
        })
    }

    /// A factor `F` with `ρ ≈ F F†` from the eigenvectors whose eigenvalues
    /// exceed `floor`.
    pub fn factor(&self, floor: f64) -> FactoredDensity {
        let eig = self.matrix.clone().symmetric_eigen();
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > floor)
            .collect();
        let mut f = DMatrix::<C64>::zeros(self.space.dim(), keep.len());
        for (col, &i) in keep.iter().enumerate() {
            f.set_column(col, &(eig.eigenvectors.column(i) * c(eig.eigenvalues[i].sqrt())));
        }
        FactoredDensity {
            space: self.space.clone(),
            factor: f,
            deficit: self.deficit,
        }
    }

    /// Smallest eigenvalue (PSD check).
    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.clone().symmetric_eigenvalues().min()
    }

    /// `Tr[ρ Ê]` with `Ê = Σ(n̂_i + 1/2)`.
    pub fn mean_energy(&self) -> f64 {
        let e = self.space.energy_diagonal();
        (0..self.space.dim()).map(|i| self.matrix[(i, i)].re * e[i]).sum()
    }

    /// `Tr[ρ Ê²]`.
    pub fn energy_second_moment(&self) -> f64 {
        let e = self.space.energy_diagonal();
        (0..self.space.dim())
            .map(|i| self.matrix[(i, i)].re * e[i] * e[i])
            .sum()
    }

    /// `Tr[ρ N̂^k]` for the total photon number.
    pub fn photon_moment(&self, k: u32) -> f64 {
        (0..self.space.dim())
            .map(|i| self.matrix[(i, i)].re * (self.space.total(i) as f64).powi(k as i32))
            .sum()
    }

    /// First moments and covariance matrix, computed from ladder-operator
    /// expectations of the embedded (infinite-space) operator.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let sp = &self.space;
        let n = sp.n();
        let rho = &self.matrix;
        let tr = self.trace();
        let mut a1 = vec![C64::new(0.0, 0.0); n];
        let mut aa = DMatrix::<C64>::zeros(n, n);
        let mut ada = DMatrix::<C64>::zeros(n, n);
        let mut k = vec![0usize; n];
        for l in 0..sp.dim() {
            let st = sp.state(l);
            for j in 0..n {
                if st[j] == 0 {
                    continue;
                }
                let cj = (st[j] as f64).sqrt();
                k.copy_from_slice(st);
                k[j] -= 1;
                let lj = sp.index_of(&k).expect("inside");
                // Tr[ρ X] = Σ_l X_{l'' l} ρ_{l l''} for X|l⟩ = c|l''⟩.
                a1[j] += rho[(l, lj)] * cj;
                for i in 0..n {
                    if k[i] > 0 {
                        let ci = (k[i] as f64).sqrt();
                        k[i] -= 1;
                        let lij = sp.index_of(&k).expect("inside");
                        aa[(i, j)] += rho[(l, lij)] * (ci * cj);
                        k[i] += 1;
                    }
                    let ci = (k[i] as f64 + 1.0).sqrt();
                    k[i] += 1;
                    let lij = sp.index_of(&k).expect("same total");
                    ada[(i, j)] += rho[(l, lij)] * (ci * cj);
                    k[i] -= 1;
                }
            }
        }
        let scale = 1.0 / tr;
        let a1: Vec<C64> = a1.iter().map(|x| x * scale).collect();
        let aa = aa * c(scale);
        let ada = ada * c(scale);
        // R_α = c_α a_i + conj(c_α) a_i† with i = α/2.
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let coef = |alpha: usize| -> (usize, C64) {
            if alpha % 2 == 0 {
                (alpha / 2, c(r))
            } else {
                (alpha / 2, Complex::new(0.0, -r))
            }
        };
        let mut mean = DVector::zeros(2 * n);
        for al in 0..2 * n {
            let (i, ca) = coef(al);
            mean[al] = 2.0 * (ca * a1[i]).re;
        }
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        for al in 0..2 * n {
            let (i, ca) = coef(al);
            for be in 0..2 * n {
                let (j, cb) = coef(be);
                let delta = if i == j { 1.0 } else { 0.0 };
                // ⟨a_i a_j†⟩ = ⟨a_j† a_i⟩ + δ_ij and ⟨a_i† a_j†⟩ = conj⟨a_i a_j⟩.
                let g = ca * cb * aa[(i, j)]
                    + ca * cb.conj() * (ada[(j, i)] + c(delta))
                    + ca.conj() * cb * ada[(i, j)]
                    + ca.conj() * cb.conj() * aa[(i, j)].conj();
                cov[(al, be)] = 2.0 * g.re - 2.0 * mean[al] * mean[be];
            }
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        (mean, cov)
    }
}

/// `½‖ρ1 − ρ2‖₁` from the eigenvalues of the Hermitian difference.
pub fn trace_distance_exact(rho1: &FockDensity, rho2: &FockDensity) -> Result<f64> {
    if rho1.space != rho2.space {
        return Err(Error::InvalidArgument(
            "states live on different Fock spaces".into(),
        ));
    }
    let diff = &rho1.matrix - &rho2.matrix;
    let ev = diff.symmetric_eigenvalues();
    Ok(0.5 * ev.iter().map(|x| x.abs()).sum::<f64>())
}

/// `√(1 − |⟨ψ|φ⟩|²)` for unit vectors.
pub fn pure_trace_distance(psi: &DVector<C64>, phi: &DVector<C64>) -> f64 {
    let ov = psi.dotc(phi).norm_sqr() / (psi.norm_squared() * phi.norm_squared());
    (1.0 - ov).max(0.0).sqrt()
}

/// `Π_{m'} ρ Π_{m'} / Tr[Π_{m'} ρ]` together with the retained weight.
pub fn project_energy_subspace(rho: &FockDensity, m: usize) -> Result<(FockDensity, f64)> {
    let m = m.min(rho.space.cutoff());
    let d = rho.space.prefix_dim(m);
    let block = rho.matrix.view((0, 0), (d, d)).into_owned();
    let weight = block.trace().re;
    if !(weight > 0.0) {
        return Err(Error::InvalidArgument(
            "projection retains zero weight".into(),
        ));
    }
    let space = FockSpace::new(rho.space.n(), m)?;
    Ok((
        FockDensity {
            space,
            matrix: block * c(1.0 / weight),
            deficit: rho.deficit,
        },
        weight,
    ))
}

/// `√(n N_phot / m')`: the trace-distance ceiling of projecting a state with
/// mean photon number per mode `N_phot` onto `H_{m'}`.
pub fn truncation_bound(n: usize, photons: f64, m: usize) -> f64 {
    truncation_bound_moment(n, photons, 1, m)
}

/// `√((n N_phot / m')^k)` for a state with `(Tr[N̂^k ρ])^{1/k} ≤ n N_phot`.
pub fn truncation_bound_moment(n: usize, photons: f64, k: u32, m: usize) -> f64 {
    if m == 0 {
        return f64::INFINITY;
    }
    (n as f64 * photons / m as f64).powi(k as i32).sqrt().min(f64::INFINITY)
}

/// Smallest cutoff for which [`truncation_bound`] is at most `accuracy`.
pub fn cutoff_for_bound(n: usize, photons: f64, accuracy: f64) -> f64 {
    crate::complexity::snap_ceil(n as f64 * photons / (accuracy * accuracy))
}

/// Measures `I ⊗ |0⟩⟨0|` on the listed tail modes; returns the success
/// probability and the normalized head state.
///
/// A success probability below `floor` is reported as a post-selection
/// failure.
pub fn vacuum_projector_measurement(
    rho: &FockDensity,
    tail_modes: &[usize],
    floor: f64,
) -> Result<(f64, FockDensity)> {
    let sp = &rho.space;
    let (head_modes, keep) = tail_selection(sp, tail_modes)?;
    let head = FockSpace::new(head_modes.len(), sp.cutoff())?;
    let dh = head.dim();
    let mut block = DMatrix::zeros(dh, dh);
    for (a, &ia) in keep.iter().enumerate() {
        for (b, &ib) in keep.iter().enumerate() {
            block[(a, b)] = rho.matrix[(ia, ib)];
        }
    }
    let p = block.trace().re / rho.trace();
    if !(p >= floor) || p <= 0.0 {
        return Err(Error::PostSelectionFailed { rate: p, floor });
    }
    let t = block.trace().re;
    Ok((
        p,
        FockDensity {
            space: head,
            matrix: block * c(1.0 / t),
            deficit: rho.deficit,
        },
    ))
}

/// Vector version of [`vacuum_projector_measurement`] without a floor:
/// returns `‖(I ⊗ ⟨0|)ψ‖²/‖ψ‖²` and the normalized head vector.
pub fn vacuum_projector_vector(
    space: &FockSpace,
    psi: &DVector<C64>,
    tail_modes: &[usize],
) -> Result<(f64, FockSpace, DVector<C64>)> {
    let (head_modes, keep) = tail_selection(space, tail_modes)?;
    let head = FockSpace::new(head_modes.len(), space.cutoff())?;
    let v = DVector::from_iterator(keep.len(), keep.iter().map(|&i| psi[i]));
    let p = v.norm_squared() / psi.norm_squared();
    let norm = v.norm();
    let v = if norm > 0.0 { v / c(norm) } else { v };
    Ok((p, head, v))
}

/// The head space (modes not listed in `tail_modes`, same cutoff) and, in
/// head-space order, the indices of its states in `space` with an empty tail.
pub fn head_embedding(space: &FockSpace, tail_modes: &[usize]) -> Result<(FockSpace, Vec<usize>)> {
    let (head_modes, keep) = tail_selection(space, tail_modes)?;
    Ok((FockSpace::new(head_modes.len(), space.cutoff())?, keep))
}

/// Head modes and, in head-space order, the full-space indices of the
/// states with an empty tail.
fn tail_selection(space: &FockSpace, tail_modes: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = space.n();
    let mut is_tail = vec![false; n];
    for &t in tail_modes {
        if t >= n || std::mem::replace(&mut is_tail[t], true) {
            return Err(Error::InvalidArgument(format!("invalid tail mode {t}")));
        }
    }
    let head_modes: Vec<usize> = (0..n).filter(|&j| !is_tail[j]).collect();
    if head_modes.is_empty() {
        return Err(Error::InvalidArgument("no head modes left".into()));
    }
    let head = FockSpace::new(head_modes.len(), space.cutoff())?;
    let mut full = vec![0usize; n];
    let keep = (0..head.dim())
        .map(|h| {
            full.iter_mut().for_each(|x| *x = 0);
            for (pos, &j) in head_modes.iter().enumerate() {
                full[j] = head.state(h)[pos];
            }
            space.index_of(&full).expect("head state embeds")
        })
        .collect();
    Ok((head_modes, keep))
}

/// Options for building Gaussian objects in the Fock basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Extra photons of headroom in the working space.
    pub buffer: usize,
    /// Largest tolerated truncation deficit.
    pub max_deficit: f64,
    /// Largest total weight of thermal-mixture terms that may be dropped
    /// (smallest weights first); the dropped weight counts towards the deficit.
    pub thermal_tail: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            buffer: 5,
            max_deficit: 1e-4,
            thermal_tail: 1e-5,
        }
    }
}

enum Op {
    /// Block-diagonal passive unitary, one matrix per photon-number sector.
    Passive(Vec<DMatrix<C64>>),
    /// A single-mode matrix acting along the fibers of one mode.
    Mode { mode: usize, matrix: DMatrix<C64> },
}

/// The Gaussian unitary `D_d U_S` compiled for a working space.
pub struct GaussianCircuit {
    space: FockSpace,
    ops: Vec<Op>,
    fibers: Vec<Vec<Vec<usize>>>,
}

impl GaussianCircuit {
    pub fn new(space: &FockSpace, s: &DMatrix<f64>, d: &DVector<f64>) -> Result<Self> {
        let n = space.n();
        if s.nrows() != 2 * n || s.ncols() != 2 * n || d.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: s.nrows(),
            });
        }
        let residual = symplectic::symplectic_residual(s)?;
        let norm = crate::linalg::op_norm(s);
        let tol = symplectic::DEFAULT_TOL * norm.max(1.0).powi(2);
        if residual > tol {
            return Err(Error::NotSymplectic { residual, tol });
        }
        let w = space.cutoff();
        let euler = symplectic::bloch_messiah(s)?;
        let mut ops = Vec::new();
        // U_S = U_{O1} U_Z U_{O2}; the first factor to act on a ket is O2.
        if let Some(op) = passive_op(space, &euler.o2)? {
            ops.push(op);
        }
        for j in 0..n {
            let z = euler.z[j];
            if (z - 1.0).abs() > 1e-14 {
                ops.push(Op::Mode {
                    mode: j,
                    matrix: squeeze_matrix(z, w),
                });
            }
        }
        if let Some(op) = passive_op(space, &euler.o1)? {
            ops.push(op);
        }
        for j in 0..n {
            let (rx, rp) = (d[2 * j], d[2 * j + 1]);
            if rx != 0.0 || rp != 0.0 {
                ops.push(Op::Mode {
                    mode: j,
                    matrix: displacement_matrix(rx, rp, w),
                });
            }
        }
        let mut fibers = vec![Vec::new(); n];
        for op in &ops {
            if let Op::Mode { mode, .. } = op {
                if fibers[*mode].is_empty() {
                    fibers[*mode] = space.fibers(*mode);
                }
            }
        }
        Ok(Self {
            space: space.clone(),
            ops,
            fibers,
        })
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    /// Applies the unitary to every column of `block` in place and returns
    /// the squared norm that left the working space.
    pub fn apply(&self, block: &mut DMatrix<C64>) -> f64 {
        let before = block.norm_squared();
        for op in &self.ops {
            match op {
                Op::Passive(sectors) => {
                    for (s, u) in sectors.iter().enumerate() {
                        let r = self.space.sector(s);
                        let rows = block.rows(r.start, r.len()).into_owned();
                        block.rows_mut(r.start, r.len()).copy_from(&(u * rows));
                    }
                }
                Op::Mode { mode, matrix } => {
                    let cols = block.ncols();
                    for fiber in &self.fibers[*mode] {
                        let len = fiber.len();
                        let seg = DMatrix::from_fn(len, cols, |i, j| block[(fiber[i], j)]);
                        let out = matrix.view((0, 0), (len, len)) * seg;
                        for (i, &row) in fiber.iter().enumerate() {
                            for j in 0..cols {
                                block[(row, j)] = out[(i, j)];
                            }
                        }
                    }
                }
            }
        }
        (before - block.norm_squared()).max(0.0)
    }
}

/// Per-sector matrices of the passive unitary `exp(−i a†ha)` with
/// `u = e^{−ih}`; `None` for the identity.
fn passive_op(space: &FockSpace, o: &DMatrix<f64>) -> Result<Option<Op>> {
    let n = space.n();
    if (o - DMatrix::<f64>::identity(2 * n, 2 * n)).amax() < 1e-14 {
        return Ok(None);
    }
    let u = unitary_from_passive(o);
    // u is normal, so its complex Schur form is diagonal.
    let (q, t) = u.clone().schur().unpack();
    let phases = DVector::from_fn(n, |i, _| c(-t[(i, i)].arg()));
    let h = &q * DMatrix::from_diagonal(&phases) * q.adjoint();

    let mut sectors = Vec::with_capacity(space.cutoff() + 1);
    let mut k = vec![0usize; n];
    for s in 0..=space.cutoff() {
        let r = space.sector(s);
        let dim = r.len();
        let mut gen = DMatrix::<C64>::zeros(dim, dim);
        for col in r.clone() {
            let st = space.state(col);
            for j in 0..n {
                if st[j] == 0 {
                    continue;
                }
                for i in 0..n {
                    if h[(i, j)] == c(0.0) {
                        continue;
                    }
                    k.copy_from_slice(st);
                    let cj = (k[j] as f64).sqrt();
                    k[j] -= 1;
                    let ci = (k[i] as f64 + 1.0).sqrt();
                    k[i] += 1;
                    let row = space.index_of(&k).expect("same sector");
                    gen[(row - r.start, col - r.start)] += h[(i, j)] * (ci * cj);
                }
            }
        }
        sectors.push((gen * Complex::new(0.0, -1.0)).exp());
    }
    Ok(Some(Op::Passive(sectors)))
}

/// Largest single-mode dimension used when exponentiating generators.
const MAX_SINGLE_MODE: usize = 4000;

/// `⟨k|S(z)|l⟩` for `k, l ≤ w`, where `S(z)† x S(z) = z x`.
///
/// The generator `(ln z / 2)(a†² − a²)` is exponentiated on a larger
/// single-mode space so that the returned block is accurate.
pub fn squeeze_matrix(z: f64, w: usize) -> DMatrix<C64> {
    let s = z.ln();
    let t2 = s.tanh().powi(2);
    let margin = if t2 > 0.0 { (80.0 / -t2.ln()).ceil() } else { 0.0 };
    let size = ((w as f64 + 1.0) * (2.0 * s).cosh() + s.sinh().powi(2) + margin + 20.0).ceil()
        as usize;
    let size = size.clamp(w + 1, MAX_SINGLE_MODE.max(w + 1));
    // a†² − a² only couples k with k + 2, so even and odd photon numbers
    // evolve separately under tridiagonal generators.
    let mut out = DMatrix::<C64>::zeros(w + 1, w + 1);
    for parity in 0..2 {
        let len = (size - parity).div_ceil(2);
        let off: Vec<f64> = (0..len.saturating_sub(1))
            .map(|j| {
                let k = 2 * j + parity;
                0.5 * s * (((k + 1) * (k + 2)) as f64).sqrt()
            })
            .collect();
        let keep = (w + 1 - parity).div_ceil(2);
        let block = expm_tridiagonal(&off, keep);
        for i in 0..keep {
            for j in 0..keep {
                out[(2 * i + parity, 2 * j + parity)] = c(block[(i, j)]);
            }
        }
    }
    out
}

/// The leading `keep × keep` block of `exp(T)`, where `T` is the real
/// antisymmetric tridiagonal matrix with `T[k+1, k] = off[k] = −T[k, k+1]`.
///
/// With `P = diag(i^k)`, `P⁻¹TP = −iJ` for the symmetric tridiagonal `J`
/// sharing the off-diagonal, so `exp(T) = P Q e^{−iΛ} Qᵀ P⁻¹` from the real
/// eigendecomposition `J = QΛQᵀ`.
fn expm_tridiagonal(off: &[f64], keep: usize) -> DMatrix<f64> {
    let size = off.len() + 1;
    let mut j = DMatrix::<f64>::zeros(size, size);
    for (k, &v) in off.iter().enumerate() {
        j[(k + 1, k)] = v;
        j[(k, k + 1)] = v;
    }
    let eig = j.symmetric_eigen();
    let q = eig.eigenvectors.rows(0, keep);
    let (cos, sin): (Vec<f64>, Vec<f64>) = eig.eigenvalues.iter().map(|l| (l.cos(), l.sin())).unzip();
    let qc = DMatrix::from_fn(keep, size, |r, k| q[(r, k)] * cos[k]);
    let qs = DMatrix::from_fn(keep, size, |r, k| q[(r, k)] * sin[k]);
    // Q e^{−iΛ} Qᵀ = C − iS with C = Q cos Λ Qᵀ and S = Q sin Λ Qᵀ.
    let cm = &qc * q.transpose();
    let sm = &qs * q.transpose();
    // exp(T)[r, k] = Re(i^{r−k} (C − iS)[r, k]).
    DMatrix::from_fn(keep, keep, |r, k| {
        let d = r as isize - k as isize;
        match d.rem_euclid(4) {
            0 => cm[(r, k)],
            1 => sm[(r, k)],
            2 => -cm[(r, k)],
            _ => -sm[(r, k)],
        }
    })
}

/// `⟨k|D_r|l⟩` for `k, l ≤ w`, where `D_r = exp(i(r_p x − r_x p))`.
///
/// Computed as `e^{iφn} D(|α|) e^{−iφn}` with `α = (r_x + i r_p)/√2`, so only
/// a real generator is exponentiated.
pub fn displacement_matrix(rx: f64, rp: f64, w: usize) -> DMatrix<C64> {
    let alpha = Complex::new(rx, rp) * std::f64::consts::FRAC_1_SQRT_2;
    let (r, phi) = (alpha.norm(), alpha.arg());
    let reach = (w as f64 + 1.0).sqrt() + r;
    let size = (reach * reach + 10.0 * reach + 30.0).ceil() as usize;
    let size = size.clamp(w + 1, MAX_SINGLE_MODE.max(w + 1));
    let off: Vec<f64> = (0..size - 1).map(|k| r * ((k + 1) as f64).sqrt()).collect();
    let full = expm_tridiagonal(&off, w + 1);
    DMatrix::from_fn(w + 1, w + 1, |i, j| {
        Complex::from_polar(full[(i, j)], phi * (i as f64 - j as f64))
    })
}

/// The matrix `Π_m D_d U_S Π_m` on `space`, computed in a working space with
/// `opts.buffer` extra photons.
///
/// The image of the vacuum must keep all but `opts.max_deficit` of its norm
/// inside `H_m`; otherwise a truncation error suggests a larger cutoff.
pub fn gaussian_unitary_matrix(
    space: &FockSpace,
    s: &DMatrix<f64>,
    d: &DVector<f64>,
    opts: &OracleOptions,
) -> Result<DMatrix<C64>> {
    let work = FockSpace::new(space.n(), space.cutoff() + opts.buffer)?;
    let circuit = GaussianCircuit::new(&work, s, d)?;
    let dm = space.dim();
    let mut block = DMatrix::<C64>::zeros(work.dim(), dm);
    for j in 0..dm {
        block[(j, j)] = c(1.0);
    }
    circuit.apply(&mut block);
    let u = block.rows(0, dm).into_owned();
    let leak = 1.0 - u.column(0).norm_squared();
    if leak > opts.max_deficit {
        return Err(Error::Truncation {
            error: leak,
            budget: opts.max_deficit,
            suggested_cutoff: space.cutoff() * 3 / 2 + opts.buffer,
        });
    }
    Ok(u)
}

/// `‖U†U − I‖` (spectral norm) restricted to the columns of `H_{m'}`.
pub fn unitarity_defect(space: &FockSpace, u: &DMatrix<C64>, m: usize) -> f64 {
    let k = space.prefix_dim(m);
    let cols = u.columns(0, k);
    let g = cols.adjoint() * cols - DMatrix::<C64>::identity(k, k);
    g.singular_values().max()
}

/// A density matrix kept as `ρ = F F†` with a tall factor `F`.
#[derive(Debug, Clone)]
pub struct FactoredDensity {
    pub space: FockSpace,
    pub factor: DMatrix<C64>,
    pub deficit: f64,
}

impl FactoredDensity {
    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn trace(&self) -> f64 {
        self.factor.norm_squared()
    }

    pub fn to_density(&self) -> FockDensity {
        FockDensity {
            space: self.space.clone(),
            matrix: &self.factor * self.factor.adjoint(),
            deficit: self.deficit,
        }
    }

    /// The same factor restricted to the prefix `H_m`, `m ≤ cutoff`.
    pub fn restrict(&self, m: usize) -> Result<Self> {
        let space = FockSpace::new(self.space.n(), m.min(self.space.cutoff()))?;
        let factor = self.factor.rows(0, space.dim()).into_owned();
        let deficit = self.deficit + (self.factor.norm_squared() - factor.norm_squared()).max(0.0);
        Ok(Self {
            space,
            factor,
            deficit,
        })
    }

    /// Squared norm of the factor rows in `H_m`.
    fn prefix_weight(&self, m: usize) -> f64 {
        self.factor
            .rows(0, self.space.prefix_dim(m))
            .norm_squared()
    }

    /// The state vector when the factor has a single column.
    pub fn pure_vector(&self) -> Option<DVector<C64>> {
        (self.factor.ncols() == 1).then(|| self.factor.column(0).into_owned())
    }
}

/// Thermal weights `Π_j (1 − q_j) q_j^{k_j}` with `q = ν/(ν+1)`,
/// `ν = (d − 1)/2`.
fn thermal_weights(space: &FockSpace, d: &DVector<f64>) -> Vec<f64> {
    let q: Vec<f64> = d
        .iter()
        .map(|&dj| {
            let nu = ((dj - 1.0) / 2.0).max(0.0);
            nu / (nu + 1.0)
        })
        .collect();
    (0..space.dim())
        .map(|i| {
            space
                .state(i)
                .iter()
                .zip(&q)
                .map(|(&k, &qj)| (1.0 - qj) * if k == 0 { 1.0 } else { qj.powi(k as i32) })
                .product()
        })
        .collect()
}

/// The Gaussian state on `space` as a factored density.
///
/// The thermal diagonal from the Williamson eigenvalues is pushed through
/// `D_m U_S` column by column in the working space `H_{m+buffer}`; the
/// deficit collects dropped thermal terms, leakage and the final projection.
pub fn gaussian_factor(
    space: &FockSpace,
    state: &GaussianState<f64>,
    opts: &OracleOptions,
) -> Result<FactoredDensity> {
    if state.n != space.n() {
        return Err(Error::DimensionMismatch {
            expected: space.n(),
            got: state.n,
        });
    }
    let dec = symplectic::williamson(&state.cov)?;
    let work = FockSpace::new(space.n(), space.cutoff() + opts.buffer)?;
    let weights = thermal_weights(&work, &dec.d);
    let kept = heaviest_terms(&weights, opts.thermal_tail);
    let mut block = DMatrix::<C64>::zeros(work.dim(), kept.len());
    for (col, &i) in kept.iter().enumerate() {
        block[(i, col)] = c(weights[i].sqrt());
    }
    let circuit = GaussianCircuit::new(&work, &dec.s, &state.mean)?;
    circuit.apply(&mut block);
    let factor = block.rows(0, space.dim()).into_owned();
    let deficit = (1.0 - factor.norm_squared()).max(0.0);
    if deficit > opts.max_deficit {
        return Err(Error::Truncation {
            error: deficit,
            budget: opts.max_deficit,
            suggested_cutoff: suggest_cutoff(space.n(), state.mean_photon_number(), space.cutoff()),
        });
    }
    Ok(FactoredDensity {
        space: space.clone(),
        factor,
        deficit,
    })
}

/// Indices of the largest weights, keeping as few as possible while the
/// dropped weight stays within `tail`.
fn heaviest_terms(weights: &[f64], tail: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| weights[j].total_cmp(&weights[i]));
    let total: f64 = weights.iter().sum();
    let target = (1.0 - tail).min(total);
    let mut mass = 0.0;
    let mut keep = 0;
    while keep < order.len() && mass < target {
        mass += weights[order[keep]];
        keep += 1;
    }
    order.truncate(keep.max(1));
    order.sort_unstable();
    order
}

fn suggest_cutoff(n: usize, photons: f64, current: usize) -> usize {
    let guess = initial_cutoff(n, photons);
    guess.max(current * 3 / 2 + 2)
}

/// A starting cutoff for a state with `photons` expected photons in total.
pub fn initial_cutoff(n: usize, photons: f64) -> usize {
    let p = photons.max(0.0);
    (2.0 * p + 5.0 * (p * (p + 1.0)).sqrt() + 4.0 + n as f64).ceil() as usize
}

/// [`gaussian_factor`] on the smallest space `H_m` with `m ≥ min_cutoff`
/// reachable by growing the cutoff until the deficit meets the budget.
pub fn gaussian_factor_auto(
    state: &GaussianState<f64>,
    min_cutoff: usize,
    opts: &OracleOptions,
) -> Result<FactoredDensity> {
    let mut cutoff = min_cutoff.max(initial_cutoff(state.n, state.mean_photon_number()));
    loop {
        let space = FockSpace::new(state.n, cutoff).map_err(|_| Error::Truncation {
            error: f64::NAN,
            budget: opts.max_deficit,
            suggested_cutoff: cutoff,
        })?;
        match gaussian_factor(&space, state, opts) {
            Err(Error::Truncation { .. }) => cutoff = cutoff * 3 / 2 + 2,
            other => return other,
        }
    }
}

/// The Gaussian state as a dense density matrix on `space`.
pub fn gaussian_density_matrix(
    space: &FockSpace,
    state: &GaussianState<f64>,
    opts: &OracleOptions,
) -> Result<FockDensity> {
    Ok(gaussian_factor(space, state, opts)?.to_density())
}

/// `½‖F1F1† − F2F2†‖₁` through the Gram matrix of `[F1 F2]`, without forming
/// the dense matrices.
pub fn trace_distance_factored(a: &FactoredDensity, b: &FactoredDensity) -> Result<f64> {
    if a.space != b.space {
        return Err(Error::InvalidArgument(
            "states live on different Fock spaces".into(),
        ));
    }
    let (r1, r2) = (a.rank(), b.rank());
    let dim = a.space.dim();
    if r1 + r2 >= dim {
        return trace_distance_exact(&a.to_density(), &b.to_density());
    }
    let mut big = DMatrix::<C64>::zeros(dim, r1 + r2);
    big.columns_mut(0, r1).copy_from(&a.factor);
    big.columns_mut(r1, r2).copy_from(&b.factor);
    // With B = QR (thin QR, stable even when B is rank deficient), B J B†
    // has the same nonzero spectrum as R J R†.
    let r = big.qr().r();
    let mut core = r.clone();
    core.columns_mut(r1, r2).iter_mut().for_each(|x| *x = -*x);
    let core = &core * r.adjoint();
    let core = (&core + core.adjoint()) * c(0.5);
    let value = 0.5 * core.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>();
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite trace distance".into()));
    }
    Ok(value)
}

/// Result of [`gaussian_trace_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleDistance {
    pub distance: f64,
    /// Largest truncation deficit of the two states.
    pub deficit: f64,
    /// Cutoff of the space the distance was computed on.
    pub cutoff: usize,
    pub dim: usize,
}

/// Trace distance between two Gaussian states from their Fock
/// representations.
///
/// Both states are first moved by a common Gaussian unitary (which leaves
/// the distance unchanged) into the frame with the least energy among a few
/// candidates; the cutoff then grows until both deficits are below
/// `opts.max_deficit`.
///
/// Two pure states are compared through their closed-form overlap
/// `|⟨ψ|φ⟩|² = 2ⁿ/√det(V₁+V₂)·exp(−δᵀ(V₁+V₂)⁻¹δ)`, which carries no
/// truncation; the result then reports `cutoff = 0`, `dim = 0` and a zero
/// deficit.
pub fn gaussian_trace_distance(
    s1: &GaussianState<f64>,
    s2: &GaussianState<f64>,
    opts: &OracleOptions,
) -> Result<OracleDistance> {
    if s1.n != s2.n {
        return Err(Error::DimensionMismatch {
            expected: s1.n,
            got: s2.n,
        });
    }
    let n = s1.n;
    if let Some(overlap) = pure_overlap(s1, s2)? {
        return Ok(OracleDistance {
            distance: (1.0 - overlap).max(0.0).sqrt().min(1.0),
            deficit: 0.0,
            cutoff: 0,
            dim: 0,
        });
    }
    let (a, b) = best_frame(s1, s2)?;
    let photons = a.mean_photon_number().max(b.mean_photon_number());
    let mut cutoff = initial_cutoff(n, photons);
    loop {
        let space = match FockSpace::new(n, cutoff) {
            Ok(sp) => sp,
            Err(_) => {
                return Err(Error::Truncation {
                    error: f64::NAN,
                    budget: opts.max_deficit,
                    suggested_cutoff: cutoff,
                })
            }
        };
        let fa = gaussian_factor(&space, &a, opts);
        let fb = gaussian_factor(&space, &b, opts);
        match (fa, fb) {
            (Ok(fa), Ok(fb)) => {
                // Graded ordering makes every H_m a prefix, so the smallest
                // cutoff meeting the budget is a free truncation.
                let mut m = 0;
                while m < cutoff
                    && (1.0 - fa.prefix_weight(m) > opts.max_deficit
                        || 1.0 - fb.prefix_weight(m) > opts.max_deficit)
                {
                    m += 1;
                }
                let (fa, fb) = (fa.restrict(m)?, fb.restrict(m)?);
                let space = fa.space.clone();
                let cutoff = m;
                let distance = match (fa.pure_vector(), fb.pure_vector()) {
                    (Some(x), Some(y)) => pure_trace_distance(&x, &y),
                    _ => trace_distance_factored(&fa, &fb)?,
                };
                return Ok(OracleDistance {
                    distance: distance.min(1.0),
                    deficit: fa.deficit.max(fb.deficit),
                    cutoff,
                    dim: space.dim(),
                });
            }
            (Err(Error::Truncation { .. }), _) | (_, Err(Error::Truncation { .. })) => {
                cutoff = cutoff * 3 / 2 + 2;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
}

/// Symplectic eigenvalues within this distance of 1 count as pure.
const PURE_TOL: f64 = 1e-9;

/// `|⟨ψ|φ⟩|²` when both states are pure, `None` otherwise.
fn pure_overlap(s1: &GaussianState<f64>, s2: &GaussianState<f64>) -> Result<Option<f64>> {
    for s in [s1, s2] {
        let d = symplectic::symplectic_eigenvalues(&s.cov)?;
        if d.iter().any(|&x| (x - 1.0).abs() > PURE_TOL) {
            return Ok(None);
        }
    }
    let sum = &s1.cov + &s2.cov;
    let delta = &s1.mean - &s2.mean;
    let chol = sum
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("V1 + V2 is not positive definite".into()))?;
    let quad = delta.dot(&chol.solve(&delta));
    let det = chol.determinant();
    Ok(Some(2f64.powi(s1.n as i32) / det.sqrt() * (-quad).exp()))
}

/// Applies the common Gaussian map `R ↦ A R + b` to both states, choosing
/// `A` among the identity and the inverse Williamson frames of `V1`, `V2`
/// and `(V1 + V2)/2`, and `b` so that the two means are centred.
fn best_frame(
    s1: &GaussianState<f64>,
    s2: &GaussianState<f64>,
) -> Result<(GaussianState<f64>, GaussianState<f64>)> {
    let n = s1.n;
    let om = symplectic::omega::<f64>(n);
    let inverse = |s: &DMatrix<f64>| -(&om * s.transpose() * &om);
    let mut frames = vec![DMatrix::<f64>::identity(2 * n, 2 * n)];
    for v in [&s1.cov, &s2.cov, &((&s1.cov + &s2.cov) * 0.5)] {
        if let Ok(dec) = symplectic::williamson(v) {
            frames.push(inverse(&dec.s));
        }
    }
    let centre = (&s1.mean + &s2.mean) * 0.5;
    let mut best: Option<(f64, GaussianState<f64>, GaussianState<f64>)> = None;
    for a in frames {
        let b = -(&a * &centre);
        let (Ok(t1), Ok(t2)) = (s1.apply_gaussian_map(&a, &b), s2.apply_gaussian_map(&a, &b)) else {
            continue;
        };
        let e = t1.mean_energy().max(t2.mean_energy());
        if best.as_ref().map_or(true, |(be, _, _)| e < *be) {
            best = Some((e, t1, t2));
        }
    }
    let (_, t1, t2) = best.expect("identity frame always applies");
    Ok((t1, t2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_order_and_ranking() {
        let sp = FockSpace::new(2, 3).unwrap();
        assert_eq!(sp.dim(), 10);
        let order: Vec<Vec<usize>> = (0..sp.dim()).map(|i| sp.state(i).to_vec()).collect();
        assert_eq!(order[0], vec![0, 0]);
        assert_eq!(order[1], vec![1, 0]);
        assert_eq!(order[2], vec![0, 1]);
        assert_eq!(order[3], vec![2, 0]);
        for n in 1..=4 {
            let sp = FockSpace::new(n, 6).unwrap();
            assert_eq!(
                sp.dim() as u128,
                crate::complexity::binomial_exact(6, n as u64).unwrap()
            );
            for i in 0..sp.dim() {
                assert_eq!(sp.index_of(sp.state(i)), Some(i));
            }
        }
        assert_eq!(sp.index_of(&[4, 0]), None);
    }

    #[test]
    fn fibers_cover_the_space() {
        let sp = FockSpace::new(3, 5).unwrap();
        for j in 0..3 {
            let mut seen = vec![0; sp.dim()];
            for f in sp.fibers(j) {
                for (t, &i) in f.iter().enumerate() {
                    assert_eq!(sp.state(i)[j], t);
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&x| x == 1));
        }
    }

    #[test]
    fn vacuum_variance_and_number() {
        let sp = FockSpace::new(1, 10).unwrap();
        let q = quadrature_operators(&sp);
        let x2 = &q[0] * &q[0];
        assert!((x2[(0, 0)].re - 0.5).abs() < 1e-15);
        let a = annihilation(&sp, 0);
        let num = a.adjoint() * &a;
        assert!((num[(1, 1)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn commutator_on_interior() {
        let sp = FockSpace::new(2, 8).unwrap();
        let q = quadrature_operators(&sp);
        let interior = sp.prefix_dim(6);
        for j in 0..2 {
            let comm = &q[2 * j] * &q[2 * j + 1] - &q[2 * j + 1] * &q[2 * j];
            for r in 0..interior {
                for col in 0..interior {
                    let expect = if r == col { Complex::new(0.0, 1.0) } else { c(0.0) };
                    assert!((comm[(r, col)] - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_unitary() {
        let sp = FockSpace::new(2, 6).unwrap();
        let u = gaussian_unitary_matrix(
            &sp,
            &DMatrix::identity(4, 4),
            &DVector::zeros(4),
            &OracleOptions::default(),
        )
        .unwrap();
        assert!(max_abs(&(u - DMatrix::<C64>::identity(sp.dim(), sp.dim()))) < 1e-15);
    }

    #[test]
    fn displaced_vacuum_overlap() {
        let sp = FockSpace::new(1, 40).unwrap();
        let (rx, rp) = (0.7, -1.1);
        let u = gaussian_unitary_matrix(
            &sp,
            &DMatrix::identity(2, 2),
            &DVector::from_vec(vec![rx, rp]),
            &OracleOptions::default(),
        )
        .unwrap();
        let amp = u[(0, 0)].norm();
        let r2: f64 = rx * rx + rp * rp;
        assert!((amp - (-r2 / 4.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn squeezed_vacuum_amplitudes() {
        let z: f64 = 1.8;
        let s = z.ln();
        let m = squeeze_matrix(z, 20);
        for k in 0..8usize {
            // |⟨2k|S|0⟩| = tanh(s)^k √((2k)!) / (2^k k! √cosh s).
            let mut ratio = 1.0f64;
            for i in 1..=k {
                ratio *= ((2 * i - 1) as f64 / (2 * i) as f64).sqrt();
            }
            let expect = s.tanh().powi(k as i32) * ratio / s.cosh().sqrt();
            assert!((m[(2 * k, 0)].norm() - expect).abs() < 1e-12);
            assert!(m[(2 * k + 1, 0)].norm() < 1e-14);
        }
    }

    #[test]
    fn thermal_fixture() {
        let sp = FockSpace::new(1, 30).unwrap();
        let th = GaussianState::thermal(&[1.0]).unwrap();
        let opts = OracleOptions {
            max_deficit: 1e-6,
            thermal_tail: 0.0,
            ..Default::default()
        };
        let rho = gaussian_density_matrix(&sp, &th, &opts).unwrap();
        for k in 0..=30 {
            assert!((rho.matrix[(k, k)].re - 0.5f64.powi(k as i32 + 1)).abs() < 1e-14);
        }
        assert!(rho.deficit <= 2f64.powi(-30) * 1.0001);
        let vac = FockDensity::fock_state(sp.clone(), &[0]).unwrap();
        assert!((trace_distance_exact(&vac, &rho).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn coherent_distance() {
        let a = GaussianState::<f64>::vacuum(1);
        let b = GaussianState::coherent(DVector::from_vec(vec![2f64.sqrt(), 0.0])).unwrap();
        let opts = OracleOptions {
            max_deficit: 1e-12,
            ..Default::default()
        };
        let d = gaussian_trace_distance(&a, &b, &opts).unwrap();
        let expect = (1.0 - (-1.0f64).exp()).sqrt();
        assert!((d.distance - expect).abs() < 1e-6, "{d:?}");
    }

    #[test]
    fn unitary_conjugates_quadratures() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
        let s = symplectic::random_symplectic::<f64, _>(2, 1.3, &mut rng).unwrap();
        let d = DVector::from_vec(vec![0.3, -0.2, 0.1, 0.25]);
        let sp = FockSpace::new(2, 30).unwrap();
        let u = gaussian_unitary_matrix(&sp, &s, &d, &OracleOptions::default()).unwrap();
        assert!(unitarity_defect(&sp, &u, 5) < 1e-8);
        let q = quadrature_operators(&sp);
        let interior = sp.prefix_dim(3);
        for k in 0..4 {
            let lhs = u.adjoint() * &q[k] * &u;
            let mut rhs = DMatrix::<C64>::identity(sp.dim(), sp.dim()) * c(d[k]);
            for l in 0..4 {
                rhs += &q[l] * c(s[(k, l)]);
            }
            for r in 0..interior {
                for col in 0..interior {
                    assert!((lhs[(r, col)] - rhs[(r, col)]).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn factored_distance_matches_dense() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let opts = OracleOptions::default();
        let sp = FockSpace::new(1, 40).unwrap();
        for _ in 0..5 {
            let a = crate::gaussian::random_gaussian_state(1, 1.5, crate::gaussian::Purity::Mixed, &mut rng).unwrap();
            let b = crate::gaussian::random_gaussian_state(1, 1.5, crate::gaussian::Purity::Pure, &mut rng).unwrap();
            let fa = gaussian_factor(&sp, &a, &opts).unwrap();
            let fb = gaussian_factor(&sp, &b, &opts).unwrap();
            let dense = trace_distance_exact(&fa.to_density(), &fb.to_density()).unwrap();
            let low = trace_distance_factored(&fa, &fb).unwrap();
            assert!((dense - low).abs() < 1e-9);
        }
    }

    #[test]
    fn moments_roundtrip() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(11);
        let sp = FockSpace::new(2, 30).unwrap();
        let st = crate::gaussian::random_gaussian_state(2, 1.6, crate::gaussian::Purity::Mixed, &mut rng).unwrap();
        let opts = OracleOptions { max_deficit: 1e-3, ..Default::default() };
        let rho = gaussian_density_matrix(&sp, &st, &opts).unwrap();
        let (m, v) = rho.moments();
        assert!((m - &st.mean).amax() < 1e-3);
        assert!((v - &st.cov).amax() < 1e-2);
    }

    #[test]
    fn fock_one_moments() {
        let sp = FockSpace::new(1, 5).unwrap();
        let rho = FockDensity::fock_state(sp, &[1]).unwrap();
        let (m, v) = rho.moments();
        assert!(m.amax() < 1e-15);
        assert!((v - DMatrix::identity(2, 2) * 3.0).amax() < 1e-14);
    }

    #[test]
    fn projections() {
        let sp = FockSpace::new(1, 30).unwrap();
        let th = GaussianState::thermal(&[1.0]).unwrap();
        let rho = gaussian_density_matrix(&sp, &th, &OracleOptions::default()).unwrap();
        let (p0, w) = project_energy_subspace(&rho, 0).unwrap();
        assert!((w - 0.5).abs() < 1e-14);
        assert!((p0.matrix[(0, 0)].re - 1.0).abs() < 1e-14);
        let (full, w) = project_energy_subspace(&rho, 30).unwrap();
        assert!((w - rho.trace()).abs() < 1e-14);
        assert_eq!(full.space, rho.space);
        assert!((truncation_bound(1, 1.0, 100) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn vacuum_projector_cases() {
        let sp = FockSpace::new(2, 6).unwrap();
        let rho = FockDensity::fock_state(sp.clone(), &[2, 0]).unwrap();
        let (p, post) = vacuum_projector_measurement(&rho, &[1], 0.0).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert!((post.matrix[(2, 2)].re - 1.0).abs() < 1e-15);
        let rho = FockDensity::fock_state(sp, &[0, 1]).unwrap();
        assert!(matches!(
            vacuum_projector_measurement(&rho, &[1], 0.25),
            Err(Error::PostSelectionFailed { .. })
        ));
    }
}
