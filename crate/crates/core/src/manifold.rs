//! The restricted PSD manifold `S*_I(p, K)` under the log-Cholesky geometry.
//!
//! A point `A` is mapped to its reduced Cholesky factor `N = h(A)` and then to
//! the reduced log-Cholesky factor `N' = g(N)`, which takes the logarithm of
//! the `K` diagonal positions `N[I[k], k]` and keeps every other entry. Both
//! maps are isometries and the target space of `g` is Euclidean, so the
//! Karcher mean of a sample is the image under `h⁻¹ ∘ g⁻¹` of the arithmetic
//! mean of the log-Cholesky factors, and geodesic distance is the Frobenius
//! distance between those factors.

use nalgebra::DMatrix;

use crate::error::{PsdError, Result};
use crate::linalg::{
    cholesky_with_floor, ensure_square, max_abs, max_asymmetry, pivot_threshold,
    reduced_cholesky, select_block, sym_eig_full, symmetrize, CholFactor, IndexSet,
    SYMMETRY_RTOL,
};

/// Relative gap used to certify numerical rank: `λ_{K+1} < RANK_RTOL · λ_K`.
pub const RANK_RTOL: f64 = 1e-6;

/// A rank-`K` PSD matrix whose rows `I` give a nonsingular block.
#[derive(Debug, Clone, PartialEq)]
pub struct RPsdMatrix {
    a: DMatrix<f64>,
    rank: usize,
    index_set: IndexSet,
}

impl RPsdMatrix {
    /// Wraps `a` after a full [`membership_check`].
    pub fn new(a: DMatrix<f64>, rank: usize, index_set: IndexSet) -> Result<Self> {
        let m = membership_check(&a, rank, &index_set);
        if !m.is_member {
            return Err(PsdError::NotInManifold {
                reason: m.reason.unwrap_or_default(),
            });
        }
        Ok(Self {
            a,
            rank,
            index_set,
        })
    }

    /// Wraps `a` on the default manifold `S*(p, K)` (index set `[0..K)`).
    pub fn canonical(a: DMatrix<f64>, rank: usize) -> Result<Self> {
        Self::new(a, rank, IndexSet::canonical(rank))
    }

    /// Builds `F Fᵀ` from a `p x K` factor.
    ///
    /// The rank is `K` by construction, so only the `I`-block is checked.
    pub fn from_low_rank_factor(f: &DMatrix<f64>, index_set: IndexSet) -> Result<Self> {
        let (p, k) = f.shape();
        index_set.check_dim(p, k)?;
        let a = symmetrize(&(f * f.transpose()));
        let idx = index_set.as_slice();
        let threshold = pivot_threshold(&a);
        cholesky_with_floor(&select_block(&a, idx, idx), threshold).map_err(|(j, d)| {
            PsdError::NotInManifold {
                reason: format!(
                    "pivot {j} of A[I,I] is {d:.3e}, below threshold {threshold:.3e}"
                ),
            }
        })?;
        Ok(Self {
            a,
            rank: k,
            index_set,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.a
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    /// Same matrix, re-tagged for another cousin manifold.
    pub fn with_index_set(&self, index_set: IndexSet) -> Result<Self> {
        Self::new(self.a.clone(), self.rank, index_set)
    }
}

/// Reduced log-Cholesky factor: an element of the Euclidean space of mock
/// lower triangular `p x K` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LogCholFactor {
    entries: DMatrix<f64>,
    index_set: IndexSet,
}

impl LogCholFactor {
    pub fn new(entries: DMatrix<f64>, index_set: IndexSet) -> Result<Self> {
        index_set.check_dim(entries.nrows(), entries.ncols())?;
        for (k, &row) in index_set.as_slice().iter().enumerate() {
            for l in (k + 1)..entries.ncols() {
                if entries[(row, l)] != 0.0 {
                    return Err(PsdError::ShapeMismatch(format!(
                        "entry ({row},{l}) is nonzero above the mock diagonal"
                    )));
                }
            }
        }
        Ok(Self { entries, index_set })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    /// Arithmetic mean of factors on a common index set.
    pub fn mean(factors: &[LogCholFactor]) -> Result<LogCholFactor> {
        let first = factors.first().ok_or(PsdError::EmptyInput)?;
        let mut sum = DMatrix::<f64>::zeros(first.entries.nrows(), first.entries.ncols());
        for f in factors {
            if f.index_set != first.index_set {
                return Err(PsdError::IndexSetMismatch);
            }
            if f.entries.shape() != sum.shape() {
                return Err(PsdError::ShapeMismatch(format!(
                    "{:?} vs {:?}",
                    f.entries.shape(),
                    sum.shape()
                )));
            }
            sum += &f.entries;
        }
        sum /= factors.len() as f64;
        Ok(LogCholFactor {
            entries: sum,
            index_set: first.index_set.clone(),
        })
    }
}

/// `h`: the reduced Cholesky factor of `A` relative to its index set.
pub fn map_h(a: &RPsdMatrix) -> Result<CholFactor> {
    reduced_cholesky(&a.a, a.rank, &a.index_set)
}

/// `g`: log-transform the diagonal positions.
pub fn map_g(n: &CholFactor) -> Result<LogCholFactor> {
    let mut entries = n.entries().clone();
    for (k, &row) in n.index_set().as_slice().iter().enumerate() {
        let d = entries[(row, k)];
        if !(d > 0.0) {
            return Err(PsdError::NonPositiveDiagonal { row, value: d });
        }
        entries[(row, k)] = d.ln();
    }
    Ok(LogCholFactor {
        entries,
        index_set: n.index_set().clone(),
    })
}

/// `g⁻¹`: exponentiate the diagonal positions.
pub fn map_g_inv(n: &LogCholFactor) -> CholFactor {
    let mut entries = n.entries.clone();
    for (k, &row) in n.index_set.as_slice().iter().enumerate() {
        entries[(row, k)] = entries[(row, k)].exp();
    }
    CholFactor::new_unchecked(entries, n.index_set.clone())
}

/// `h⁻¹`: `N ↦ N Nᵀ`, tagged with rank `K` and the factor's index set.
pub fn map_h_inv(n: &CholFactor) -> RPsdMatrix {
    RPsdMatrix {
        a: n.gram(),
        rank: n.k(),
        index_set: n.index_set().clone(),
    }
}

/// `g ∘ h`.
pub fn log_cholesky(a: &RPsdMatrix) -> Result<LogCholFactor> {
    map_g(&map_h(a)?)
}

/// `h⁻¹ ∘ g⁻¹`.
pub fn from_log_cholesky(n: &LogCholFactor) -> RPsdMatrix {
    map_h_inv(&map_g_inv(n))
}

fn check_compatible(a: &RPsdMatrix, b: &RPsdMatrix) -> Result<()> {
    if a.p() != b.p() || a.rank != b.rank {
        return Err(PsdError::ShapeMismatch(format!(
            "(p={}, K={}) vs (p={}, K={})",
            a.p(),
            a.rank,
            b.p(),
            b.rank
        )));
    }
    if a.index_set != b.index_set {
        return Err(PsdError::IndexSetMismatch);
    }
    Ok(())
}

/// Closed-form Karcher mean: `h⁻¹ ∘ g⁻¹` of the mean log-Cholesky factor.
pub fn karcher_mean(points: &[RPsdMatrix]) -> Result<RPsdMatrix> {
    let first = points.first().ok_or(PsdError::EmptyInput)?;
    let mut factors = Vec::with_capacity(points.len());
    for (i, a) in points.iter().enumerate() {
        check_compatible(first, a)?;
        let f = log_cholesky(a).map_err(|e| match e {
            PsdError::NotInManifold { reason } => PsdError::SampleNotInManifold { index: i, reason },
            other => other,
        })?;
        factors.push(f);
    }
    Ok(from_log_cholesky(&LogCholFactor::mean(&factors)?))
}

/// Geodesic distance: Frobenius distance between log-Cholesky factors.
pub fn geodesic_distance(a: &RPsdMatrix, b: &RPsdMatrix) -> Result<f64> {
    check_compatible(a, b)?;
    let fa = log_cholesky(a)?;
    let fb = log_cholesky(b)?;
    Ok((fa.entries() - fb.entries()).norm())
}

/// Outcome of [`membership_check`] with the quantities it was decided on.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub is_member: bool,
    /// `λ_K(A)`.
    pub lambda_k: f64,
    /// `λ_{K+1}(A)`, zero when `K = p`.
    pub lambda_k_plus_1: f64,
    /// Smallest Cholesky pivot of `A[I, I]` (negative or zero when the block
    /// is singular; the factorization stops at the first failing pivot).
    pub min_pivot: f64,
    pub reason: Option<String>,
}

/// Tests whether `A` lies on `S*_I(p, K)`: symmetric, PSD of numerical rank
/// `K`, with a nonsingular `I`-block.
pub fn membership_check(a: &DMatrix<f64>, k: usize, index_set: &IndexSet) -> Membership {
    let mut out = Membership {
        is_member: false,
        lambda_k: f64::NAN,
        lambda_k_plus_1: f64::NAN,
        min_pivot: f64::NAN,
        reason: None,
    };
    if let Err(e) = ensure_square(a, "membership input") {
        out.reason = Some(e.to_string());
        return out;
    }
    if let Err(e) = index_set.check_dim(a.nrows(), k) {
        out.reason = Some(e.to_string());
        return out;
    }
    let scale = max_abs(a);
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_RTOL * scale.max(f64::MIN_POSITIVE) {
        out.reason = Some(format!("asymmetry {asym:.3e}"));
        return out;
    }
    let p = a.nrows();
    let values = match sym_eig_full(a) {
        Ok((values, _)) => values,
        Err(e) => {
            out.reason = Some(e.to_string());
            return out;
        }
    };
    out.lambda_k = values[k - 1];
    out.lambda_k_plus_1 = if k < p { values[k] } else { 0.0 };
    let lambda_min = values[p - 1];

    let threshold = pivot_threshold(a);
    let idx = index_set.as_slice();
    let block = select_block(a, idx, idx);
    let pivot_ok = match cholesky_with_floor(&block, threshold) {
        Ok((_, min_pivot)) => {
            out.min_pivot = min_pivot;
            true
        }
        Err((_, d)) => {
            out.min_pivot = d;
            false
        }
    };

    out.reason = if !(out.lambda_k > threshold) {
        Some(format!(
            "lambda_K = {:.3e} is not above {threshold:.3e}",
            out.lambda_k
        ))
    } else if out.lambda_k_plus_1.abs() >= RANK_RTOL * out.lambda_k {
        Some(format!(
            "numerical rank exceeds {k}: lambda_K+1 / lambda_K = {:.3e}",
            out.lambda_k_plus_1 / out.lambda_k
        ))
    } else if lambda_min < -RANK_RTOL * out.lambda_k {
        Some(format!("negative eigenvalue {lambda_min:.3e}"))
    } else if !pivot_ok {
        Some(format!(
            "A[I,I] is singular: pivot {:.3e} below {threshold:.3e}",
            out.min_pivot
        ))
    } else {
        None
    };
    out.is_member = out.reason.is_none();
    out
}
