use thiserror::Error;

/// Errors raised by the geometry, perturbation and distributed-PCA routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsdError {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e} > {tolerance:.3e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not on the restricted PSD manifold: {reason}")]
    NotInManifold { reason: String },

    #[error("sample {index} is not on the restricted PSD manifold: {reason}")]
    SampleNotInManifold { index: usize, reason: String },

    #[error("machines {machines:?} produced local estimates outside the manifold")]
    MachinesNotInManifold { machines: Vec<usize> },

    #[error("matrix is numerically singular (smallest singular value {sigma_min:.3e} <= {threshold:.3e})")]
    Singular { sigma_min: f64, threshold: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("inputs live on different cousin manifolds")]
    IndexSetMismatch,

    #[error("factor has a non-positive diagonal position at row {row} (value {value:.3e})")]
    NonPositiveDiagonal { row: usize, value: f64 },

    #[error("eigenvalue {index} is {value:.3e}, not above the positivity threshold {threshold:.3e}")]
    NonPositiveSpectrum {
        index: usize,
        value: f64,
        threshold: f64,
    },

    #[error("eigen gap {gap:.3e} is not above threshold {threshold:.3e}")]
    ZeroGap { gap: f64, threshold: f64 },

    #[error("matrix is not orthogonal (max deviation {deviation:.3e})")]
    NotOrthogonal { deviation: f64 },

    #[error("covariance is not positive semi-definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("every candidate row gives a degenerate block at step {step}")]
    DegenerateRows { step: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("invalid rotation order: {0}")]
    InvalidOrder(String),
}

pub type Result<T> = std::result::Result<T, PsdError>;
