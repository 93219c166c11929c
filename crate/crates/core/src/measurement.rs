//! Simulated homodyne and heterodyne data.
//!
//! A [`StateSource`] models a supply of identical copies of a state and
//! counts every copy that a measurement consumes. Gaussian sources are
//! sampled from their exact normal laws; Fock sources with at most two modes
//! are sampled on a fine grid of the joint quadrature density.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FactoredDensity, FockDensity};
use crate::gaussian::GaussianState;
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::symplectic::omega;
use crate::C64;

/// Tolerance of the commutation check `Q Ω Qᵀ = 0`.
const COMMUTATION_TOL: f64 = 1e-12;

/// A set of mutually commuting quadratures measured jointly on one copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Setting {
    /// `x_1, ..., x_n`.
    Positions,
    /// `p_1, ..., p_n`.
    Momenta,
    /// `u_j = (x_j + p_j)/√2` on every mode.
    Rotated,
    /// `(x_i)_{i≠k}` together with `p_k`, listed in mode order.
    Mixed { k: usize },
    /// One single-mode quadrature `x cos θ_j + p sin θ_j` per mode.
    Angles(Vec<f64>),
    /// Arbitrary rows of a `q × 2n` matrix acting on `R`.
    Custom(DMatrix<f64>),
}

impl Setting {
    /// Per-mode measurement angles, when the setting measures exactly one
    /// rotated quadrature on every mode.
    pub fn angles(&self, n: usize) -> Option<Vec<f64>> {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
        match self {
            Setting::Positions => Some(vec![0.0; n]),
            Setting::Momenta => Some(vec![FRAC_PI_2; n]),
            Setting::Rotated => Some(vec![FRAC_PI_4; n]),
            Setting::Mixed { k } if *k < n => Some(
                (0..n)
                    .map(|j| if j == *k { FRAC_PI_2 } else { 0.0 })
                    .collect(),
            ),
            Setting::Angles(a) if a.len() == n => Some(a.clone()),
            _ => None,
        }
    }

    /// The `q × 2n` matrix whose rows are the measured quadratures.
    pub fn quadratures(&self, n: usize) -> Result<DMatrix<f64>> {
        if let Setting::Custom(q) = self {
            if q.ncols() != 2 * n {
                return Err(Error::DimensionMismatch {
                    expected: 2 * n,
                    got: q.ncols(),
                });
            }
            return Ok(q.clone());
        }
        let angles = self.angles(n).ok_or_else(|| {
            Error::InvalidArgument(format!("setting {self:?} does not fit {n} modes"))
        })?;
        let mut q = DMatrix::zeros(n, 2 * n);
        for (j, th) in angles.iter().enumerate() {
            q[(j, 2 * j)] = th.cos();
            q[(j, 2 * j + 1)] = th.sin();
        }
        Ok(q)
    }

    /// Number of outcomes per shot.
    pub fn len(&self, n: usize) -> usize {
        match self {
            Setting::Custom(q) => q.nrows(),
            _ => n,
        }
    }

    pub fn is_empty(&self, n: usize) -> bool {
        self.len(n) == 0
    }

    pub fn label(&self) -> String {
        match self {
            Setting::Positions => "positions".into(),
            Setting::Momenta => "momenta".into(),
            Setting::Rotated => "rotated".into(),
            Setting::Mixed { k } => format!("mixed-{k}"),
            Setting::Angles(a) => {
                let parts: Vec<String> = a.iter().map(|t| format!("{t}")).collect();
                format!("angles({})", parts.join(";"))
            }
            Setting::Custom(q) => format!("custom-{}x{}", q.nrows(), q.ncols()),
        }
    }

    /// Checks that the quadratures mutually commute, `Q Ω Qᵀ = 0`.
    pub fn check_commuting(&self, n: usize) -> Result<()> {
        let q = self.quadratures(n)?;
        let c = &q * omega::<f64>(n) * q.transpose();
        let worst = c.amax();
        if worst > COMMUTATION_TOL * q.norm_squared().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "setting {} contains non-commuting quadratures (|[Q_i, Q_j]| up to {worst:.3e})",
                self.label()
            )));
        }
        Ok(())
    }
}

/// Outcomes of one setting, one row per consumed copy.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub setting: Setting,
    /// `count × q` matrix of outcomes.
    pub shots: DMatrix<f64>,
}

impl SampleBatch {
    pub fn count(&self) -> usize {
        self.shots.nrows()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.shots.column(j).iter().copied().collect()
    }

    /// Writes the batch as CSV: a header naming the setting and one row per
    /// shot.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let label = self.setting.label();
        let header: Vec<String> = (0..self.shots.ncols())
            .map(|j| format!("{label}:q{j}"))
            .collect();
        let io = |e: csv::Error| Error::Numerical(format!("csv output failed: {e}"));
        w.write_record(&header).map_err(io)?;
        for r in 0..self.shots.nrows() {
            let row: Vec<String> = self.shots.row(r).iter().map(|v| format!("{v:e}")).collect();
            w.write_record(&row).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Numerical(format!("csv output failed: {e}")))?;
        Ok(())
    }
}

/// The state behind a [`StateSource`].
#[derive(Debug, Clone)]
pub enum SourceState {
    Gaussian(GaussianState<f64>),
    Fock(FockDensity),
}

/// A supply of copies of one state with a consumption counter and an
/// optional copy budget.
#[derive(Debug, Clone)]
pub struct StateSource {
    state: SourceState,
    /// `ρ = F F†` for Fock sources, computed once.
    factor: Option<FactoredDensity>,
    consumed: usize,
    budget: Option<usize>,
}

impl StateSource {
    /// A Gaussian source; the state must satisfy the uncertainty relation.
    pub fn gaussian(state: GaussianState<f64>) -> Result<Self> {
        if !state.validate(1e-9)? {
            return Err(Error::UncertaintyViolated {
                min_eigenvalue: state.min_uncertainty_eigenvalue(),
            });
        }
        Ok(Self {
            state: SourceState::Gaussian(state),
            factor: None,
            consumed: 0,
            budget: None,
        })
    }

    pub fn fock(rho: FockDensity) -> Self {
        Self {
            factor: Some(rho.factor(1e-14)),
            state: SourceState::Fock(rho),
            consumed: 0,
            budget: None,
        }
    }

    /// A Fock source given in factored form, which skips the
    /// eigendecomposition of [`StateSource::fock`].
    pub fn fock_factored(factor: FactoredDensity) -> Self {
        Self {
            state: SourceState::Fock(factor.to_density()),
            factor: Some(factor),
            consumed: 0,
            budget: None,
        }
    }

    /// The factor `F` with `ρ = F F†` of a Fock source.
    pub fn fock_factor(&self) -> Option<&FactoredDensity> {
        self.factor.as_ref()
    }

    /// Caps the total number of copies that can be consumed.
    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn state(&self) -> &SourceState {
        &self.state
    }

    pub fn n(&self) -> usize {
        match &self.state {
            SourceState::Gaussian(g) => g.n,
            SourceState::Fock(r) => r.space.n(),
        }
    }

    pub fn copies_consumed(&self) -> usize {
        self.consumed
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    /// Copies left under the budget, `None` when unlimited.
    pub fn remaining(&self) -> Option<usize> {
        self.budget.map(|b| b - self.consumed)
    }

    /// Records the consumption of `count` copies.
    pub fn consume(&mut self, count: usize) -> Result<()> {
        if let Some(left) = self.remaining() {
            if count > left {
                return Err(Error::Starvation {
                    requested: count,
                    available: left,
                });
            }
        }
        self.consumed += count;
        Ok(())
    }

    /// First moments and covariance matrix of the underlying state.
    pub fn true_moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        match &self.state {
            SourceState::Gaussian(g) => (g.mean.clone(), g.cov.clone()),
            SourceState::Fock(r) => r.moments(),
        }
    }
}

/// Draws `count` vectors from `N(mean, cov)`.
///
/// Uses the Cholesky factor of `cov`; a singular `cov` (pure squeezed
/// marginals) falls back to the eigendecomposition with clamped eigenvalues.
pub fn sample_normal<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    count: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let q = mean.len();
    let cov = symmetrize(cov);
    let factor = match Cholesky::new(cov.clone()) {
        Some(ch) => ch.unpack(),
        None => {
            let (vals, vecs) = sym_eigen_desc(&cov);
            &vecs * DMatrix::from_diagonal(&vals.map(|v| v.max(0.0).sqrt()))
        }
    };
    let mut out = DMatrix::zeros(count, q);
    let mut z = DVector::zeros(q);
    for r in 0..count {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let x = mean + &factor * &z;
        out.row_mut(r).copy_from(&x.transpose());
    }
    out
}

/// Heterodyne outcomes: i.i.d. draws from `N(m, (V + I)/2)`.
pub fn heterodyne_sample<R: Rng + ?Sized>(
    source: &mut StateSource,
    count: usize,
    rng: &mut R,
) -> Result<SampleBatch> {
    let g = match &source.state {
        SourceState::Gaussian(g) => g.clone(),
        SourceState::Fock(_) => {
            return Err(Error::InvalidArgument(
                "heterodyne sampling needs a Gaussian source".into(),
            ))
        }
    };
    source.consume(count)?;
    let n = g.n;
    let cov = (&g.cov + DMatrix::<f64>::identity(2 * n, 2 * n)) * 0.5;
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    q.fill_with_identity();
    Ok(SampleBatch {
        setting: Setting::Custom(q),
        shots: sample_normal(&g.mean, &cov, count, rng),
    })
}

/// Joint homodyne outcomes of a commuting setting.
///
/// Gaussian sources give i.i.d. draws from `N(Qm, Q(V/2)Qᵀ)`. Fock sources
/// with one or two modes are sampled from the exact joint density of the
/// per-mode rotated quadratures, tabulated on a grid.
pub fn homodyne_joint_sample<R: Rng + ?Sized>(
    source: &mut StateSource,
    setting: &Setting,
    count: usize,
    rng: &mut R,
) -> Result<SampleBatch> {
    let n = source.n();
    setting.check_commuting(n)?;
    let shots = match &source.state {
        SourceState::Gaussian(g) => {
            let q = setting.quadratures(n)?;
            let mean = &q * &g.mean;
            let cov = &q * (&g.cov * 0.5) * q.transpose();
            source.consume(count)?;
            sample_normal(&mean, &cov, count, rng)
        }
        SourceState::Fock(_) => {
            let angles = setting.angles(n).ok_or_else(|| {
                Error::InvalidArgument(
                    "Fock sources support one rotated quadrature per mode".into(),
                )
            })?;
            let grid = QuadratureGrid::new(source.factor.as_ref().expect("Fock sources carry a factor"), &angles)?;
            source.consume(count)?;
            grid.sample(count, rng)
        }
    };
    Ok(SampleBatch {
        setting: setting.clone(),
        shots,
    })
}

/// The `n + 3` rounds of the moment-estimation plan: positions, momenta, the
/// rotated round standing in for the `{x_j, p_j}` measurement, and one mixed
/// round per mode.
pub fn table2_sample_plan(n: usize) -> Result<Vec<Setting>> {
    if n == 0 {
        return Err(Error::InvalidArgument("mode count must be positive".into()));
    }
    let mut plan = vec![Setting::Positions, Setting::Momenta, Setting::Rotated];
    plan.extend((0..n).map(|k| Setting::Mixed { k }));
    Ok(plan)
}

/// Hermite functions `ψ_k(x)`, `k ≤ kmax`, for `x = (a + a†)/√2`.
pub fn hermite_functions(x: f64, kmax: usize) -> Vec<f64> {
    let mut psi = vec![0.0; kmax + 1];
    psi[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if kmax >= 1 {
        psi[1] = std::f64::consts::SQRT_2 * x * psi[0];
    }
    for k in 1..kmax {
        let kf = k as f64;
        psi[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * psi[k] - (kf / (kf + 1.0)).sqrt() * psi[k - 1];
    }
    psi
}

/// Grid spacing of the Fock homodyne sampler.
const GRID_STEP: f64 = 0.02;

/// Joint density of per-mode rotated quadratures of a Fock-space state,
/// tabulated at cell centres.
struct QuadratureGrid {
    n: usize,
    lo: f64,
    cells: usize,
    cdf: Vec<f64>,
}

impl QuadratureGrid {
    fn new(rho: &FactoredDensity, angles: &[f64]) -> Result<Self> {
        let space = &rho.space;
        let n = space.n();
        if n > 2 {
            return Err(Error::InvalidArgument(
                "homodyne sampling of Fock sources supports at most two modes".into(),
            ));
        }
        let kmax = space.cutoff();
        let reach = (2.0 * kmax as f64 + 1.0).sqrt() + 5.0;
        let cells = (2.0 * reach / GRID_STEP).ceil() as usize;
        let lo = -(cells as f64) * GRID_STEP / 2.0;
        // Phased Hermite functions per mode: ψ_k(x) e^{−iθ k} on cell centres.
        let tables: Vec<DMatrix<C64>> = angles
            .iter()
            .map(|&th| {
                let mut t = DMatrix::<C64>::zeros(cells, kmax + 1);
                for i in 0..cells {
                    let x = lo + (i as f64 + 0.5) * GRID_STEP;
                    for (k, v) in hermite_functions(x, kmax).into_iter().enumerate() {
                        t[(i, k)] = C64::from_polar(v, -th * k as f64);
                    }
                }
                t
            })
            .collect();
        let factor = &rho.factor;
        let size = cells.pow(n as u32);
        let mut density = vec![0.0; size];
        for col in factor.column_iter() {
            let amp: DMatrix<C64> = if n == 1 {
                let v = &tables[0] * col;
                DMatrix::from_column_slice(cells, 1, v.as_slice())
            } else {
                let mut m = DMatrix::<C64>::zeros(kmax + 1, kmax + 1);
                for idx in 0..space.dim() {
                    let st = space.state(idx);
                    m[(st[0], st[1])] = col[idx];
                }
                &tables[0] * m * tables[1].transpose()
            };
            // Row-major flattening: the first mode varies slowest.
            if n == 1 {
                for i in 0..cells {
                    density[i] += amp[(i, 0)].norm_sqr();
                }
            } else {
                for i in 0..cells {
                    for j in 0..cells {
                        density[i * cells + j] += amp[(i, j)].norm_sqr();
                    }
                }
            }
        }
        let mut cdf = Vec::with_capacity(size);
        let mut acc = 0.0;
        for p in density {
            acc += p;
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::Numerical("quadrature density vanishes on the grid".into()));
        }
        Ok(Self { n, lo, cells, cdf })
    }

    fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> DMatrix<f64> {
        let total = *self.cdf.last().expect("non-empty grid");
        let mut out = DMatrix::zeros(count, self.n);
        for r in 0..count {
            let u = rng.random::<f64>() * total;
            let cell = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
            let idx = if self.n == 1 {
                vec![cell]
            } else {
                vec![cell / self.cells, cell % self.cells]
            };
            for (j, i) in idx.into_iter().enumerate() {
                out[(r, j)] = self.lo + (i as f64 + rng.random::<f64>()) * GRID_STEP;
            }
        }
        out
    }
}
