//! Dense matrix primitives: reduced Cholesky factors on cousin manifolds,
//! Givens-sequence LQ factorization, Procrustes sign alignment, top-K
//! symmetric eigendecomposition and subspace distances.
//!
//! Row indices are zero-based throughout the crate.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{PsdError, Result};

/// Relative pivot threshold. Singularity checks compare against
/// `PIVOT_RTOL * max|A|` of the matrix under test.
pub const PIVOT_RTOL: f64 = 1e-10;

/// Relative tolerance used to decide whether an input is symmetric.
pub const SYMMETRY_RTOL: f64 = 1e-10;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `PIVOT_RTOL` scaled by the max-norm of `m`.
pub fn pivot_threshold(m: &DMatrix<f64>) -> f64 {
    PIVOT_RTOL * max_abs(m)
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(PsdError::ShapeMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn ensure_symmetric(m: &DMatrix<f64>) -> Result<()> {
    ensure_square(m, "symmetric input")?;
    let tolerance = SYMMETRY_RTOL * max_abs(m).max(f64::MIN_POSITIVE);
    let asymmetry = max_asymmetry(m);
    if asymmetry > tolerance {
        return Err(PsdError::NotSymmetric {
            asymmetry,
            tolerance,
        });
    }
    Ok(())
}

/// Ordered set of `K` distinct row indices selecting a cousin manifold.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Validates `indices` against the ambient dimension `p`.
    pub fn new(indices: Vec<usize>, p: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(PsdError::InvalidIndexSet("index set is empty".into()));
        }
        let mut seen = vec![false; p];
        for &i in &indices {
            if i >= p {
                return Err(PsdError::InvalidIndexSet(format!(
                    "index {i} out of range for p = {p}"
                )));
            }
            if seen[i] {
                return Err(PsdError::InvalidIndexSet(format!("index {i} repeated")));
            }
            seen[i] = true;
        }
        Ok(Self(indices))
    }

    /// The leading rows `[0, 1, ..., k-1]`.
    pub fn canonical(k: usize) -> Self {
        Self((0..k).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_canonical(&self) -> bool {
        self.0.iter().enumerate().all(|(k, &i)| k == i)
    }

    /// Rows of `0..p` not in the set, ascending.
    pub fn complement(&self, p: usize) -> Vec<usize> {
        let mut mask = vec![false; p];
        for &i in &self.0 {
            mask[i] = true;
        }
        (0..p).filter(|&i| !mask[i]).collect()
    }

    pub(crate) fn check_dim(&self, p: usize, k: usize) -> Result<()> {
        if self.len() != k {
            return Err(PsdError::ShapeMismatch(format!(
                "index set has {} entries, rank is {k}",
                self.len()
            )));
        }
        if let Some(&bad) = self.0.iter().find(|&&i| i >= p) {
            return Err(PsdError::InvalidIndexSet(format!(
                "index {bad} out of range for p = {p}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (n, i) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "]")
    }
}

/// Selects the rows `rows` of `m`, in that order.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

pub fn select_block(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// A `p x K` factor `N` that is mock lower triangular relative to its index
/// set, with strictly positive entries at the diagonal positions
/// `N[I[k], k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    entries: DMatrix<f64>,
    index_set: IndexSet,
}

impl CholFactor {
    pub fn new(entries: DMatrix<f64>, index_set: IndexSet) -> Result<Self> {
        index_set.check_dim(entries.nrows(), entries.ncols())?;
        let idx = index_set.as_slice();
        for (k, &row) in idx.iter().enumerate() {
            let d = entries[(row, k)];
            if !(d > 0.0) {
                return Err(PsdError::NonPositiveDiagonal { row, value: d });
            }
            for l in (k + 1)..entries.ncols() {
                if entries[(row, l)] != 0.0 {
                    return Err(PsdError::NotInManifold {
                        reason: format!(
                            "entry ({row},{l}) is nonzero above the mock diagonal"
                        ),
                    });
                }
            }
        }
        Ok(Self { entries, index_set })
    }

    pub(crate) fn new_unchecked(entries: DMatrix<f64>, index_set: IndexSet) -> Self {
        Self { entries, index_set }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn p(&self) -> usize {
        self.entries.nrows()
    }

    pub fn k(&self) -> usize {
        self.entries.ncols()
    }

    /// `N Nᵀ`, symmetrized.
    pub fn gram(&self) -> DMatrix<f64> {
        symmetrize(&(&self.entries * self.entries.transpose()))
    }

    /// The `K x K` lower-triangular block `N[I, :]`.
    pub fn leading_block(&self) -> DMatrix<f64> {
        select_rows(&self.entries, self.index_set.as_slice())
    }
}

/// Dense Cholesky `A = L Lᵀ` of a small SPD block with a pivot floor.
///
/// Returns the index of the first pivot that falls below `threshold`.
pub(crate) fn cholesky_with_floor(
    a: &DMatrix<f64>,
    threshold: f64,
) -> std::result::Result<(DMatrix<f64>, f64), (usize, f64)> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        min_pivot = min_pivot.min(d);
        if !(d > threshold) {
            return Err((j, d));
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok((l, min_pivot))
}

/// Reduced Cholesky factor of a rank-`k` PSD matrix on the cousin manifold
/// selected by `index_set`.
///
/// Factors `A[I, I] = L Lᵀ` and sets `N = A[:, I] L⁻ᵀ`; the rows `I` of `N`
/// are `L` itself, so the mock-triangular pattern holds exactly.
pub fn reduced_cholesky(a: &DMatrix<f64>, k: usize, index_set: &IndexSet) -> Result<CholFactor> {
    ensure_symmetric(a)?;
    let p = a.nrows();
    index_set.check_dim(p, k)?;
    let idx = index_set.as_slice();
    let block = select_block(a, idx, idx);
    let threshold = pivot_threshold(a);
    let (l, _) = cholesky_with_floor(&block, threshold).map_err(|(j, d)| {
        PsdError::NotInManifold {
            reason: format!(
                "pivot {j} of A[I,I] is {d:.3e}, below threshold {threshold:.3e}"
            ),
        }
    })?;

    let mut n = DMatrix::<f64>::zeros(p, k);
    for (r, &row) in idx.iter().enumerate() {
        for c in 0..=r {
            n[(row, c)] = l[(r, c)];
        }
    }
    let mut y = vec![0.0; k];
    for row in index_set.complement(p) {
        // forward substitution L y = A[I, row]
        for r in 0..k {
            let mut s = a[(idx[r], row)];
            for c in 0..r {
                s -= l[(r, c)] * y[c];
            }
            y[r] = s / l[(r, r)];
        }
        for c in 0..k {
            n[(row, c)] = y[c];
        }
    }
    Ok(CholFactor::new_unchecked(n, index_set.clone()))
}

/// The reduced Cholesky factor of `F Fᵀ`, computed from `F` without forming
/// the product: with `F[I, :] = L Q` (Givens LQ), `N = F Qᵀ`.
///
/// Same result as `reduced_cholesky(F Fᵀ, K, I)` but the error grows with
/// the condition number of `F[I, :]` rather than its square.
pub fn reduced_factor_of(f: &DMatrix<f64>, index_set: &IndexSet) -> Result<CholFactor> {
    let (p, k) = f.shape();
    index_set.check_dim(p, k)?;
    let idx = index_set.as_slice();
    let block = select_rows(f, idx);
    let threshold = pivot_threshold(f);
    let s = sigma_min(&block);
    if !(s > threshold) {
        return Err(PsdError::NotInManifold {
            reason: format!("sigma_min of F[I,:] is {s:.3e}, below threshold {threshold:.3e}"),
        });
    }
    let (l, q) = lq_givens(&block)?;
    let mut n = f * q.transpose();
    for (r, &row) in idx.iter().enumerate() {
        for c in 0..k {
            n[(row, c)] = if c <= r { l[(r, c)] } else { 0.0 };
        }
    }
    Ok(CholFactor::new_unchecked(n, index_set.clone()))
}

/// Smallest singular value of `m`.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |acc, &s| acc.min(s))
}

fn ensure_nonsingular(m: &DMatrix<f64>) -> Result<()> {
    let threshold = pivot_threshold(m);
    let s = sigma_min(m);
    if !(s > threshold) {
        return Err(PsdError::Singular {
            sigma_min: s,
            threshold,
        });
    }
    Ok(())
}

/// The annihilation order `(0,1), ..., (0,K-1), (1,2), ..., (K-2,K-1)`.
pub fn row_major_order(k: usize) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            order.push((i, j));
        }
    }
    order
}

/// LQ factorization `M = R Q` with `R` lower triangular with positive
/// diagonal and `Q` orthogonal, built from `K(K-1)/2` Givens rotations that
/// zero the strict upper triangle in row-major order.
pub fn lq_givens(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    lq_givens_with_order(m, &row_major_order(m.nrows()))
}

/// Like [`lq_givens`] with an explicit annihilation order.
///
/// Each pair `(i, j)` with `i < j` zeroes entry `(i, j)` by rotating columns
/// `i` and `j`. Rows must be visited in nondecreasing order; within a row the
/// columns may come in any order. Every strictly-upper pair must appear once.
pub fn lq_givens_with_order(
    m: &DMatrix<f64>,
    order: &[(usize, usize)],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    ensure_square(m, "LQ input")?;
    let k = m.nrows();
    validate_order(k, order)?;
    ensure_nonsingular(m)?;

    let mut r = m.clone();
    let mut q = DMatrix::<f64>::identity(k, k);
    for &(i, j) in order {
        let (a, b) = (r[(i, i)], r[(i, j)]);
        if b == 0.0 {
            continue;
        }
        let h = a.hypot(b);
        let (c, s) = (a / h, b / h);
        // R <- R Gᵀ: mixes columns i and j
        for row in 0..k {
            let (ri, rj) = (r[(row, i)], r[(row, j)]);
            r[(row, i)] = c * ri + s * rj;
            r[(row, j)] = -s * ri + c * rj;
        }
        r[(i, j)] = 0.0;
        // Q <- G Q: mixes rows i and j
        for col in 0..k {
            let (qi, qj) = (q[(i, col)], q[(j, col)]);
            q[(i, col)] = c * qi + s * qj;
            q[(j, col)] = -s * qi + c * qj;
        }
    }
    for d in 0..k {
        if r[(d, d)] < 0.0 {
            for row in 0..k {
                r[(row, d)] = -r[(row, d)];
            }
            for col in 0..k {
                q[(d, col)] = -q[(d, col)];
            }
        }
    }
    Ok((r, q))
}

fn validate_order(k: usize, order: &[(usize, usize)]) -> Result<()> {
    let expected = k * k.saturating_sub(1) / 2;
    if order.len() != expected {
        return Err(PsdError::InvalidOrder(format!(
            "expected {expected} rotations, got {}",
            order.len()
        )));
    }
    let mut seen = vec![false; k * k];
    let mut last_row = 0;
    for &(i, j) in order {
        if !(i < j && j < k) {
            return Err(PsdError::InvalidOrder(format!(
                "pair ({i},{j}) is not strictly upper"
            )));
        }
        if i < last_row {
            return Err(PsdError::InvalidOrder(format!(
                "row {i} revisited after row {last_row}"
            )));
        }
        if seen[i * k + j] {
            return Err(PsdError::InvalidOrder(format!("pair ({i},{j}) repeated")));
        }
        seen[i * k + j] = true;
        last_row = i;
    }
    Ok(())
}

/// Orthonormal eigenvectors with positive, descending eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl SpectralPair {
    pub fn new(vectors: DMatrix<f64>, values: DVector<f64>) -> Result<Self> {
        if vectors.ncols() != values.len() {
            return Err(PsdError::ShapeMismatch(format!(
                "{} eigenvectors but {} eigenvalues",
                vectors.ncols(),
                values.len()
            )));
        }
        let k = values.len();
        for i in 0..k {
            if !(values[i] > 0.0) || (i > 0 && values[i] > values[i - 1]) {
                return Err(PsdError::NonPositiveSpectrum {
                    index: i,
                    value: values[i],
                    threshold: 0.0,
                });
            }
        }
        let deviation = orthonormality_defect(&vectors);
        if deviation > 1e-8 {
            return Err(PsdError::NotOrthogonal { deviation });
        }
        Ok(Self { vectors, values })
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn p(&self) -> usize {
        self.vectors.nrows()
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (c, &l) in self.values.iter().enumerate() {
            let w = f(l);
            scaled.column_mut(c).scale_mut(w);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }
}

/// `max |VᵀV - I|`.
pub fn orthonormality_defect(v: &DMatrix<f64>) -> f64 {
    let g = v.transpose() * v;
    let k = g.nrows();
    max_abs(&(g - DMatrix::<f64>::identity(k, k)))
}

/// Flips each column so its largest-magnitude entry is positive; ties go to
/// the lowest row.
pub fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        for r in 1..col.len() {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending,
/// eigenvectors sign-normalized by [`fix_signs`].
pub fn sym_eig_full(s: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    ensure_symmetric(s)?;
    let eig = SymmetricEigen::new(symmetrize(s));
    let n = s.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_signs(&mut vectors);
    Ok((values, vectors))
}

/// Full eigendecomposition kept together: values descending, vectors in the
/// matching columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn of(s: &DMatrix<f64>) -> Result<Self> {
        let (values, vectors) = sym_eig_full(s)?;
        Ok(Self { values, vectors })
    }

    /// `λ_K − λ_{K+1}`, with `λ_{p+1} = −∞`.
    pub fn gap(&self, k: usize) -> f64 {
        if k >= self.values.len() {
            f64::INFINITY
        } else {
            self.values[k - 1] - self.values[k]
        }
    }

    pub fn top(&self, k: usize) -> SpectralPair {
        SpectralPair {
            vectors: self.vectors.columns(0, k).into_owned(),
            values: self.values.rows(0, k).into_owned(),
        }
    }
}

/// Whether [`sym_eig_topk`] must reject a non-positive `λ_K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Positivity {
    Require,
    Allow,
}

/// Top-`k` eigenpairs of a symmetric matrix.
///
/// With [`Positivity::Allow`] the returned pair may carry non-positive
/// eigenvalues; it is then not a valid [`SpectralPair`] for factor-building
/// callers, which should use [`Positivity::Require`].
pub fn sym_eig_topk(s: &DMatrix<f64>, k: usize, positivity: Positivity) -> Result<SpectralPair> {
    if k == 0 || k > s.nrows() {
        return Err(PsdError::ShapeMismatch(format!(
            "rank {k} out of range for a {}x{} matrix",
            s.nrows(),
            s.ncols()
        )));
    }
    let (values, vectors) = sym_eig_full(s)?;
    let top_values = values.rows(0, k).into_owned();
    let top_vectors = vectors.columns(0, k).into_owned();
    if positivity == Positivity::Require {
        let threshold = pivot_threshold(s);
        if !(top_values[k - 1] > threshold) {
            return Err(PsdError::NonPositiveSpectrum {
                index: k - 1,
                value: top_values[k - 1],
                threshold,
            });
        }
    }
    Ok(SpectralPair {
        vectors: top_vectors,
        values: top_values,
    })
}

/// Best rank-`k` approximation (truncated eigendecomposition) of a symmetric
/// matrix.
pub fn best_rank_k(s: &DMatrix<f64>, k: usize) -> Result<SpectralPair> {
    sym_eig_topk(s, k, Positivity::Allow)
}

/// Orthogonal polar factor `U₁U₂ᵀ` of `H = U₁ Γ U₂ᵀ`; the orthogonal
/// matrix closest to `H`.
pub fn procrustes_sign(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(h, "Procrustes input")?;
    let svd = SVD::new(h.clone(), true, true);
    let threshold = pivot_threshold(h);
    let smin = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |acc, &s| acc.min(s));
    if !(smin > threshold) {
        return Err(PsdError::Singular {
            sigma_min: smin,
            threshold,
        });
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok(u * v_t)
}

/// `‖V₁V₁ᵀ − V₂V₂ᵀ‖_F` for column-orthonormal `V₁`, `V₂`.
pub fn projector_distance(v1: &DMatrix<f64>, v2: &DMatrix<f64>) -> Result<f64> {
    if v1.shape() != v2.shape() {
        return Err(PsdError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            v1.shape(),
            v2.shape()
        )));
    }
    let diff = v1 * v1.transpose() - v2 * v2.transpose();
    Ok(diff.norm())
}

/// Orthonormal basis of `span(m)` via thin QR, with the sign convention of
/// [`fix_signs`].
pub fn orthonormal_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = m.clone().qr().q();
    fix_signs(&mut q);
    q
}
