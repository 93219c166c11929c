use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants are grouped so a front end can map them onto exit codes:
/// shape and argument problems, numerical failures, and declared
/// algorithmic failures of the estimation pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} exceeds tolerance {tol:.3e})")]
    NotSymmetric { asymmetry: f64, tol: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is ill-conditioned (smallest eigenvalue {min_eigenvalue:.3e} below {threshold:.3e})")]
    IllConditioned { min_eigenvalue: f64, threshold: f64 },

    #[error("matrix is not symplectic (residual {residual:.3e} exceeds tolerance {tol:.3e})")]
    NotSymplectic { residual: f64, tol: f64 },

    #[error("covariance matrix violates the uncertainty relation (min eigenvalue of V + iΩ is {min_eigenvalue:.3e})")]
    UncertaintyViolated { min_eigenvalue: f64 },

    #[error("energy budget violated: {quantity} = {value} exceeds budget {budget}")]
    BudgetViolated {
        quantity: &'static str,
        value: f64,
        budget: f64,
    },

    #[error("Fock truncation error {error:.3e} exceeds budget {budget:.3e}; try cutoff >= {suggested_cutoff}")]
    Truncation {
        error: f64,
        budget: f64,
        suggested_cutoff: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("moment estimate failed the uncertainty check (min eigenvalue {min_eigenvalue:.3e})")]
    MomentEstimationFailed { min_eigenvalue: f64 },

    #[error("source exhausted: requested {requested} copies, {available} available")]
    Starvation { requested: usize, available: usize },

    #[error("post-selection success rate {rate:.4} below floor {floor:.4}")]
    PostSelectionFailed { rate: f64, floor: f64 },

    #[error("retained fraction {retained:.4} below 1/2; the photon-number budget is probably violated")]
    BudgetViolationSuspected { retained: f64 },
}

impl Error {
    /// True for declared algorithmic failures, as opposed to bad input or
    /// numerical breakdown.
    pub fn is_pipeline_failure(&self) -> bool {
        matches!(
            self,
            Error::MomentEstimationFailed { .. }
                | Error::Starvation { .. }
                | Error::PostSelectionFailed { .. }
                | Error::BudgetViolationSuspected { .. }
        )
    }

    /// True for failures of a decomposition, factorization or truncation.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotSymmetric { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::IllConditioned { .. }
                | Error::NotSymplectic { .. }
                | Error::UncertaintyViolated { .. }
                | Error::Truncation { .. }
                | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
