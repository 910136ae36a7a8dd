//! Divide-and-conquer PCA over simulated machines.
//!
//! Every machine ships only its top-`K` eigenpairs `(V̂ᵐ, Λ̂ᵐ)`. The central
//! aggregators differ in how they combine them:
//!
//! * [`lrc_dpca`]: Karcher mean of `V̂ᵐ (Λ̂ᵐ)² V̂ᵐᵀ` on a restricted PSD
//!   manifold, then its top-`K` eigenvectors;
//! * [`dpca_fan`]: average of the projectors `V̂ᵐ V̂ᵐᵀ`;
//! * [`dpca_bw`]: average of the rank-`K` approximations `V̂ᵐ Λ̂ᵐ V̂ᵐᵀ`;
//! * [`full_pca`]: the pooled-data reference, which needs full covariances.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{PsdError, Result};
use crate::linalg::{
    best_rank_k, pivot_threshold, select_block, sigma_min, sym_eig_full, sym_eig_topk, symmetrize,
    IndexSet, Positivity, SpectralPair, PIVOT_RTOL,
};
use crate::manifold::{karcher_mean, RPsdMatrix};

/// What one machine communicates: its top-`K` eigenpairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSummary {
    pub machine_id: usize,
    pub spectral: SpectralPair,
}

impl LocalSummary {
    pub fn from_covariance(cov: &DMatrix<f64>, k: usize, machine_id: usize) -> Result<Self> {
        Ok(Self {
            machine_id,
            spectral: sym_eig_topk(cov, k, Positivity::Require)?,
        })
    }

    /// `V̂ diag(f(λ̂)) V̂ᵀ`.
    fn weighted(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        self.spectral.reconstruct_with(f)
    }
}

/// Local summaries for a batch of covariances; eigendecompositions run in
/// parallel, results keep input order.
pub fn summarize(covariances: &[DMatrix<f64>], k: usize) -> Result<Vec<LocalSummary>> {
    covariances
        .par_iter()
        .enumerate()
        .map(|(m, cov)| LocalSummary::from_covariance(cov, k, m))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Full,
    Lrc,
    Fan,
    Bw,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Full => "fpca",
            Method::Lrc => "lrc_dpca",
            Method::Fan => "dpca_fan",
            Method::Bw => "dpca_bw",
        }
    }

    pub const ALL: [Method; 4] = [Method::Full, Method::Lrc, Method::Fan, Method::Bw];
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Per machine: whether its local estimate was on the manifold.
    pub membership: Vec<bool>,
    /// `λ_K − λ_{K+1}` of the aggregated matrix.
    pub gap: f64,
    /// Set when the aggregated gap is numerically zero; the eigenvectors are
    /// then the solver's deterministic choice.
    pub zero_gap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpcaResult {
    pub v_est: DMatrix<f64>,
    pub method: Method,
    pub index_set_used: Option<IndexSet>,
    pub diagnostics: Diagnostics,
}

fn top_k_with_gap(
    s: &DMatrix<f64>,
    k: usize,
    method: Method,
    index_set_used: Option<IndexSet>,
    membership: Vec<bool>,
) -> Result<DpcaResult> {
    let (values, vectors) = sym_eig_full(s)?;
    if k == 0 || k > values.len() {
        return Err(PsdError::ShapeMismatch(format!(
            "K = {k} for a {}x{} matrix",
            s.nrows(),
            s.ncols()
        )));
    }
    let gap = if k < values.len() {
        values[k - 1] - values[k]
    } else {
        f64::INFINITY
    };
    let scale = values.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    Ok(DpcaResult {
        v_est: vectors.columns(0, k).into_owned(),
        method,
        index_set_used,
        diagnostics: Diagnostics {
            membership,
            gap,
            zero_gap: !(gap > PIVOT_RTOL * scale),
        },
    })
}

fn average(mats: impl Iterator<Item = DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let mut count = 0usize;
    let mut sum: Option<DMatrix<f64>> = None;
    for m in mats {
        count += 1;
        match sum.as_mut() {
            None => sum = Some(m),
            Some(s) => {
                if s.shape() != m.shape() {
                    return Err(PsdError::ShapeMismatch(format!(
                        "{:?} vs {:?}",
                        s.shape(),
                        m.shape()
                    )));
                }
                *s += m;
            }
        }
    }
    let sum = sum.ok_or(PsdError::EmptyInput)?;
    Ok(symmetrize(&(sum / count as f64)))
}

/// Top-`K` eigenvectors of the average of the local covariances.
pub fn full_pca(covariances: &[DMatrix<f64>], k: usize) -> Result<DpcaResult> {
    let mean = average(covariances.iter().cloned())?;
    top_k_with_gap(&mean, k, Method::Full, None, Vec::new())
}

/// LRC-dPCA: Karcher mean of `{V̂ᵐ (Λ̂ᵐ)² V̂ᵐᵀ}` on `S*_I(p, K)`, then its
/// top-`K` eigenvectors.
///
/// When some local matrices fall off the manifold the error lists those
/// machines; choose another index set with [`find_index`].
pub fn lrc_dpca(summaries: &[LocalSummary], k: usize, index_set: &IndexSet) -> Result<DpcaResult> {
    if summaries.is_empty() {
        return Err(PsdError::EmptyInput);
    }
    let mut points = Vec::with_capacity(summaries.len());
    let mut bad = Vec::new();
    let mut membership = Vec::with_capacity(summaries.len());
    for s in summaries {
        if s.spectral.k() != k {
            return Err(PsdError::ShapeMismatch(format!(
                "machine {} sent {} eigenpairs, expected {k}",
                s.machine_id,
                s.spectral.k()
            )));
        }
        let mut factor = s.spectral.vectors.clone();
        for (c, &l) in s.spectral.values.iter().enumerate() {
            factor.column_mut(c).scale_mut(l);
        }
        match RPsdMatrix::from_low_rank_factor(&factor, index_set.clone()) {
            Ok(a) => {
                membership.push(true);
                points.push(a);
            }
            Err(PsdError::NotInManifold { .. }) => {
                membership.push(false);
                bad.push(s.machine_id);
            }
            Err(e) => return Err(e),
        }
    }
    if !bad.is_empty() {
        return Err(PsdError::MachinesNotInManifold { machines: bad });
    }
    let mean = karcher_mean(&points)?;
    top_k_with_gap(
        mean.matrix(),
        k,
        Method::Lrc,
        Some(index_set.clone()),
        membership,
    )
}

/// Projector averaging: top-`K` eigenvectors of `(1/M) Σ V̂ᵐ V̂ᵐᵀ`.
pub fn dpca_fan(summaries: &[LocalSummary], k: usize) -> Result<DpcaResult> {
    let mean = average(summaries.iter().map(|s| s.weighted(|_| 1.0)))?;
    top_k_with_gap(&mean, k, Method::Fan, None, Vec::new())
}

/// Rank-`K` approximation averaging: top-`K` eigenvectors of
/// `(1/M) Σ V̂ᵐ Λ̂ᵐ V̂ᵐᵀ`.
pub fn dpca_bw(summaries: &[LocalSummary], k: usize) -> Result<DpcaResult> {
    let mean = average(summaries.iter().map(|s| s.weighted(|l| l)))?;
    top_k_with_gap(&mean, k, Method::Bw, None, Vec::new())
}

/// Euclidean baseline: best rank-`K` approximation of the arithmetic mean,
/// tagged with the inputs' index set.
pub fn euclid_rankk_mean(points: &[RPsdMatrix], k: usize) -> Result<RPsdMatrix> {
    let first = points.first().ok_or(PsdError::EmptyInput)?;
    let mean = average(points.iter().map(|a| a.matrix().clone()))?;
    let top = best_rank_k(&mean, k)?;
    let mut factor = top.vectors.clone();
    for (c, &l) in top.values.iter().enumerate() {
        if !(l > 0.0) {
            return Err(PsdError::NonPositiveSpectrum {
                index: c,
                value: l,
                threshold: 0.0,
            });
        }
        factor.column_mut(c).scale_mut(l.sqrt());
    }
    RPsdMatrix::from_low_rank_factor(&factor, first.index_set().clone())
}

/// Greedy row selection for a well-conditioned cousin manifold.
///
/// With `T = V Λ`, step `k` appends the row `i` maximizing the `k`-th
/// singular value of `T[(I[..k], i), ..k+1]`. Rows already chosen are skipped
/// (they would make the block singular); ties go to the smallest row.
pub fn find_index(v: &DMatrix<f64>, lambda: &DVector<f64>, k: usize) -> Result<IndexSet> {
    let (p, kv) = v.shape();
    if lambda.len() != kv || k == 0 || k > kv {
        return Err(PsdError::ShapeMismatch(format!(
            "V is {p}x{kv}, Λ has {} entries, K = {k}",
            lambda.len()
        )));
    }
    let mut t = v.columns(0, k).into_owned();
    for c in 0..k {
        if !(lambda[c] > 0.0) {
            return Err(PsdError::NonPositiveSpectrum {
                index: c,
                value: lambda[c],
                threshold: 0.0,
            });
        }
        t.column_mut(c).scale_mut(lambda[c]);
    }
    let threshold = pivot_threshold(&t);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut taken = vec![false; p];
    for step in 0..k {
        let cols: Vec<usize> = (0..=step).collect();
        let mut rows = chosen.clone();
        rows.push(0);
        let mut best: Option<(usize, f64)> = None;
        for (i, _) in taken.iter().enumerate().filter(|(_, t)| !**t) {
            rows[step] = i;
            let score = sigma_min(&select_block(&t, &rows, &cols));
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        match best {
            Some((i, score)) if score > threshold => {
                chosen.push(i);
                taken[i] = true;
            }
            _ => return Err(PsdError::DegenerateRows { step }),
        }
    }
    IndexSet::new(chosen, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projector_distance;
    use nalgebra::dmatrix;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    fn covs() -> Vec<DMatrix<f64>> {
        vec![
            dmatrix![4.0, 1.0, 0.2; 1.0, 3.0, 0.1; 0.2, 0.1, 1.0],
            dmatrix![5.0, 0.8, 0.0; 0.8, 2.5, 0.3; 0.0, 0.3, 0.9],
        ]
    }

    #[test]
    fn single_machine_methods_agree() {
        let c = &covs()[..1];
        let s = summarize(c, 2).unwrap();
        let full = full_pca(c, 2).unwrap();
        for r in [
            lrc_dpca(&s, 2, &IndexSet::canonical(2)).unwrap(),
            dpca_fan(&s, 2).unwrap(),
            dpca_bw(&s, 2).unwrap(),
        ] {
            assert!(projector_distance(&r.v_est, &s[0].spectral.vectors).unwrap() < 1e-10);
            assert!(projector_distance(&r.v_est, &full.v_est).unwrap() < 1e-10);
        }
    }

    #[test]
    fn identical_machines() {
        let c = vec![covs()[1].clone(); 4];
        let s = summarize(&c, 2).unwrap();
        let full = full_pca(&c, 2).unwrap();
        let lrc = lrc_dpca(&s, 2, &IndexSet::canonical(2)).unwrap();
        assert!(projector_distance(&lrc.v_est, &full.v_est).unwrap() < 1e-10);
        assert_eq!(lrc.diagnostics.membership, vec![true; 4]);
        assert!(!lrc.diagnostics.zero_gap);
    }

    #[test]
    fn lrc_reports_bad_machines() {
        let c = vec![diag(&[1.0, 3.0, 0.5]), diag(&[3.0, 1.0, 0.5])];
        let s = summarize(&c, 1).unwrap();
        match lrc_dpca(&s, 1, &IndexSet::canonical(1)) {
            Err(PsdError::MachinesNotInManifold { machines }) => assert_eq!(machines, vec![0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn euclid_mean_examples() {
        let a1 = RPsdMatrix::canonical(diag(&[1.0, 0.0]), 1).unwrap();
        let a4 = RPsdMatrix::canonical(diag(&[4.0, 0.0]), 1).unwrap();
        let m = euclid_rankk_mean(&[a1, a4.clone()], 1).unwrap();
        assert!((m.matrix() - diag(&[2.5, 0.0])).amax() < 1e-14);
        let m = euclid_rankk_mean(&[a4.clone(), a4.clone()], 1).unwrap();
        assert!((m.matrix() - a4.matrix()).amax() < 1e-14);
    }

    #[test]
    fn find_index_examples() {
        let t = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0; 0.0, 0.0];
        let ones = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(find_index(&t, &ones, 2).unwrap(), IndexSet::canonical(2));

        let t = dmatrix![0.0; 1.0];
        assert_eq!(
            find_index(&t, &DVector::from_vec(vec![1.0]), 1).unwrap().as_slice(),
            &[1]
        );

        let t = dmatrix![0.0, 0.0; 1.0, 0.0; 0.0, 1.0];
        assert_eq!(find_index(&t, &ones, 2).unwrap().as_slice(), &[1, 2]);
    }

    #[test]
    fn find_index_degenerate() {
        let t = dmatrix![1.0, 0.0; 1.0, 0.0; 0.0, 0.0];
        let ones = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            find_index(&t, &ones, 2),
            Err(PsdError::DegenerateRows { step: 1 })
        ));
    }
}
