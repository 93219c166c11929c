//! Continuous-variable quantum state tomography toolkit.
//!
//! The crate covers the full path from the Gaussian `(m, V)` data model to
//! end-to-end tomography pipelines:
//!
//! * [`symplectic`]: the symplectic form, Williamson and Bloch–Messiah
//!   decompositions, random symplectic matrices.
//! * [`gaussian`]: Gaussian states, energy moments and Gaussian maps.
//! * [`fock`]: a truncated Fock-space oracle with exact trace distances.
//! * [`measurement`]: simulated homodyne and heterodyne data.
//! * [`robust`]: median-of-means and moment estimation from homodyne data.
//! * [`bounds`]: closed-form trace-distance bounds between Gaussian states.
//! * [`tomography`]: Gaussian, moment-constrained and t-compressible learners.
//! * [`complexity`]: sample-complexity and effective-dimension formulas.
//!
//! Conventions: quadratures are ordered `R = (x1, p1, ..., xn, pn)`, the
//! ladder operator is `a = (x + ip)/√2`, and the covariance matrix is
//! `V = Tr[{R − m, (R − m)ᵀ} ρ]`, so the vacuum has `V = I`.
//!
//! The real-matrix layers ([`symplectic`], [`gaussian`], [`bounds`] and
//! [`robust::median_of_means`]) are generic over the scalar type through
//! [`Real`]; the Fock oracle, samplers and pipelines work in `f64`.

pub mod bounds;
pub mod complexity;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod measurement;
pub mod robust;
pub mod symplectic;
pub mod tomography;

pub(crate) mod linalg;

pub use error::{Error, Result};

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Scalar type accepted by the generic real-matrix layers.
pub trait Real: RealField + Copy + ToPrimitive {}

impl<T: RealField + Copy + ToPrimitive> Real for T {}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Complex scalar used by the Fock-space oracle.
pub type C64 = nalgebra::Complex<f64>;

pub type GaussianStateF64 = gaussian::GaussianState<f64>;
pub type GaussianStateF32 = gaussian::GaussianState<f32>;
pub type SymplecticDecompositionF64 = symplectic::SymplecticDecomposition<f64>;
pub type SymplecticDecompositionF32 = symplectic::SymplecticDecomposition<f32>;
pub type EulerDecompositionF64 = symplectic::EulerDecomposition<f64>;
pub type BoundReportF64 = bounds::BoundReport<f64>;
