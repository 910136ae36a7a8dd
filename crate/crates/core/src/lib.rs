//! Geometry of fixed-rank positive semidefinite matrices under the
//! log-Cholesky metric, with closed-form Karcher means, first-order
//! perturbation formulas, and divide-and-conquer PCA built on them.
//!
//! * [`linalg`]: reduced Cholesky, Givens LQ, eigen and Procrustes kernels;
//! * [`manifold`]: the restricted manifold `S*_I(p, K)`, log-Cholesky
//!   coordinates, Karcher mean and geodesic distance;
//! * [`perturbation`]: first-order expansions of LQ factors, Karcher-mean
//!   factors and aligned eigenvectors;
//! * [`models`]: seeded generators for signals, noise and sample data;
//! * [`dpca`]: LRC-dPCA and the baseline aggregators;
//! * [`experiments`]: simulation runners producing CSV records.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dpca;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod manifold;
pub mod models;
pub mod perturbation;

pub use error::{PsdError, Result};
pub use linalg::{CholFactor, IndexSet, SpectralPair};
pub use manifold::{geodesic_distance, karcher_mean, LogCholFactor, RPsdMatrix};
