//! First-order perturbation expansions for the LQ factorization, the Karcher
//! mean factor under a signal-plus-noise model, and the top-`K` eigenvectors
//! of a symmetric matrix, together with routines that measure how far the
//! exact computations are from those predictions.

use nalgebra::{DMatrix, DVector};

use crate::error::{PsdError, Result};
use crate::linalg::{
    ensure_square, lq_givens, max_abs, orthonormality_defect, pivot_threshold,
    procrustes_sign, select_rows, sym_eig_topk, CholFactor, IndexSet, Positivity, SpectralPair,
    Spectrum,
};
use crate::manifold::{karcher_mean, map_h};
use crate::models::spn_build;

/// `N` split into its `K x K` lower-triangular block `R = N[I, :]` and the
/// remaining rows `B`, in ascending row order.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedFactor {
    pub r: DMatrix<f64>,
    pub b: DMatrix<f64>,
    index_set: IndexSet,
}

impl PartitionedFactor {
    pub fn split(n: &CholFactor) -> Self {
        let p = n.p();
        Self {
            r: n.leading_block(),
            b: select_rows(n.entries(), &n.index_set().complement(p)),
            index_set: n.index_set().clone(),
        }
    }

    pub fn assemble(&self) -> Result<CholFactor> {
        let p = self.r.nrows() + self.b.nrows();
        let entries = scatter_rows(&self.r, &self.b, &self.index_set, p);
        CholFactor::new(entries, self.index_set.clone())
    }
}

/// A `p x K` noise matrix split into the rows `I` (`e1`) and the rest (`e2`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSplit {
    pub e1: DMatrix<f64>,
    pub e2: DMatrix<f64>,
}

impl NoiseSplit {
    pub fn split(e: &DMatrix<f64>, index_set: &IndexSet) -> Self {
        Self {
            e1: select_rows(e, index_set.as_slice()),
            e2: select_rows(e, &index_set.complement(e.nrows())),
        }
    }

    pub fn assemble(&self, index_set: &IndexSet) -> DMatrix<f64> {
        let p = self.e1.nrows() + self.e2.nrows();
        scatter_rows(&self.e1, &self.e2, index_set, p)
    }
}

fn scatter_rows(
    head: &DMatrix<f64>,
    tail: &DMatrix<f64>,
    index_set: &IndexSet,
    p: usize,
) -> DMatrix<f64> {
    let k = head.ncols();
    let mut out = DMatrix::<f64>::zeros(p, k);
    for (r, &row) in index_set.as_slice().iter().enumerate() {
        out.row_mut(row).copy_from(&head.row(r));
    }
    for (r, row) in index_set.complement(p).into_iter().enumerate() {
        out.row_mut(row).copy_from(&tail.row(r));
    }
    out
}

/// Strictly upper-triangular part of a square matrix.
pub fn strict_upper(p: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(p.nrows(), p.ncols());
    for j in 0..p.ncols() {
        for i in 0..j.min(p.nrows()) {
            out[(i, j)] = p[(i, j)];
        }
    }
    out
}

fn check_lower_invertible(r: &DMatrix<f64>) -> Result<()> {
    ensure_square(r, "R")?;
    let threshold = pivot_threshold(r);
    let dmin = r.diagonal().iter().fold(f64::INFINITY, |a, &d| a.min(d));
    if !(dmin > threshold) {
        return Err(PsdError::Singular {
            sigma_min: dmin,
            threshold,
        });
    }
    Ok(())
}

/// The skew-symmetric linearization `f_R(E) = U(R⁻¹E) − U(R⁻¹E)ᵀ`, where
/// `U` keeps the strict upper triangle.
pub fn f_r(r: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_lower_invertible(r)?;
    if e.shape() != r.shape() {
        return Err(PsdError::ShapeMismatch(format!(
            "R is {:?}, E is {:?}",
            r.shape(),
            e.shape()
        )));
    }
    let rinv_e = r
        .solve_lower_triangular(e)
        .ok_or(PsdError::Singular {
            sigma_min: 0.0,
            threshold: pivot_threshold(r),
        })?;
    let u = strict_upper(&rinv_e);
    let ut = u.transpose();
    Ok(u - ut)
}

/// First-order prediction of the LQ factors of `R Q + E`:
/// `Q̌ ≈ Q + f_R(EQᵀ) Q` and `Ř ≈ R + EQᵀ − R f_R(EQᵀ)`.
///
/// Returns `(Q̌, Ř)`.
pub fn predict_lq(
    r: &DMatrix<f64>,
    q: &DMatrix<f64>,
    e: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eqt = e * q.transpose();
    let f = f_r(r, &eqt)?;
    let q_pred = q + &f * q;
    let r_pred = r + &eqt - r * &f;
    Ok((q_pred, r_pred))
}

/// Max-norm distance between the exact Givens LQ factors of `R Q + E` and
/// the first-order prediction.
pub fn lq_prediction_remainder(
    r: &DMatrix<f64>,
    q: &DMatrix<f64>,
    e: &DMatrix<f64>,
) -> Result<f64> {
    let (r_exact, q_exact) = lq_givens(&(r * q + e))?;
    let (q_pred, r_pred) = predict_lq(r, q, e)?;
    Ok(max_abs(&(q_exact - q_pred)).max(max_abs(&(r_exact - r_pred))))
}

fn mean_matrix(es: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = es.first().ok_or(PsdError::EmptyInput)?;
    let mut sum = DMatrix::<f64>::zeros(first.nrows(), first.ncols());
    for e in es {
        if e.shape() != sum.shape() {
            return Err(PsdError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                e.shape(),
                sum.shape()
            )));
        }
        sum += e;
    }
    Ok(sum / es.len() as f64)
}

/// First-order prediction of the reduced Cholesky factor of the Karcher mean
/// of `{(N + Eᵐ)(N + Eᵐ)ᵀ}`: `N + Ē − N f_R(Ē₁)`, where `Ē₁` is the
/// `I`-block of the mean noise.
pub fn predict_karcher_factor(n: &CholFactor, es: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let mean = mean_matrix(es)?;
    if mean.shape() != n.entries().shape() {
        return Err(PsdError::ShapeMismatch(format!(
            "factor is {:?}, noise is {:?}",
            n.entries().shape(),
            mean.shape()
        )));
    }
    let split = NoiseSplit::split(&mean, n.index_set());
    let f = f_r(&n.leading_block(), &split.e1)?;
    Ok(n.entries() + mean - n.entries() * f)
}

/// Max-norm distance between the exact Karcher-mean factor and
/// [`predict_karcher_factor`].
pub fn karcher_prediction_remainder(n: &CholFactor, es: &[DMatrix<f64>]) -> Result<f64> {
    let points = spn_build(n, es)?;
    let exact = map_h(&karcher_mean(&points)?)?;
    let pred = predict_karcher_factor(n, es)?;
    Ok(max_abs(&(exact.entries() - pred)))
}

/// `V + g(ℰV)`: the first-order expansion of the Procrustes-aligned top-`K`
/// eigenvectors of `Σ + ℰ`, given the full spectrum of `Σ`.
///
/// `g` maps the columns `w_j` to `Σ_{i>K} (λ_j − λ_i)⁻¹ v_i v_iᵀ w_j`.
pub fn eigvec_first_order(
    spectrum: &Spectrum,
    perturbation: &DMatrix<f64>,
    k: usize,
) -> Result<DMatrix<f64>> {
    let p = spectrum.values.len();
    if perturbation.shape() != (p, p) || k == 0 || k > p {
        return Err(PsdError::ShapeMismatch(format!(
            "spectrum of size {p}, perturbation {:?}, K = {k}",
            perturbation.shape()
        )));
    }
    check_gap(spectrum, k)?;
    let v = spectrum.vectors.columns(0, k);
    let rest = spectrum.vectors.columns(k, p - k);
    let w = perturbation * v;
    let mut coeff = rest.transpose() * w;
    for j in 0..k {
        for i in 0..(p - k) {
            coeff[(i, j)] /= spectrum.values[j] - spectrum.values[k + i];
        }
    }
    Ok(v + rest * coeff)
}

fn check_gap(spectrum: &Spectrum, k: usize) -> Result<()> {
    let gap = spectrum.gap(k);
    let scale = spectrum.values.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let threshold = crate::linalg::PIVOT_RTOL * scale;
    if !(gap > threshold) {
        return Err(PsdError::ZeroGap { gap, threshold });
    }
    Ok(())
}

/// Top-`K` eigenpairs of `sigma_hat` and the orthogonal alignment
/// `Ĥ = sgn(V̂ᵀV)` that brings `V̂` closest to `v`.
pub fn aligned_top_k(
    sigma_hat: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<(SpectralPair, DMatrix<f64>)> {
    let local = sym_eig_topk(sigma_hat, v.ncols(), Positivity::Require)?;
    let h = procrustes_sign(&(local.vectors.transpose() * v))?;
    Ok((local, h))
}

/// `Q* = Λ⁻¹ Vᵀ N`, the rotation with `N = V Λ Q*`.
pub fn qstar_from(n: &CholFactor, spectral: &SpectralPair) -> Result<DMatrix<f64>> {
    if spectral.p() != n.p() || spectral.k() != n.k() {
        return Err(PsdError::ShapeMismatch(format!(
            "factor is {}x{}, spectrum is {}x{}",
            n.p(),
            n.k(),
            spectral.p(),
            spectral.k()
        )));
    }
    let inv = DVector::from_iterator(spectral.k(), spectral.values.iter().map(|l| 1.0 / l));
    let q = DMatrix::from_diagonal(&inv) * spectral.vectors.transpose() * n.entries();
    let deviation = orthonormality_defect(&q);
    if deviation > 1e-8 {
        return Err(PsdError::NotOrthogonal { deviation });
    }
    Ok(q)
}

/// Builds `Êᵐ = Σ̂ᵐ V̂ᵐ Ĥᵐ Q* − Σ V Q*` for many local covariances against one
/// population covariance.
#[derive(Debug, Clone)]
pub struct EhatBuilder {
    v: DMatrix<f64>,
    qstar: DMatrix<f64>,
    signal: DMatrix<f64>,
}

impl EhatBuilder {
    pub fn new(sigma: &DMatrix<f64>, k: usize, qstar: &DMatrix<f64>) -> Result<Self> {
        let spectrum = Spectrum::of(sigma)?;
        if k == 0 || k > spectrum.values.len() || qstar.shape() != (k, k) {
            return Err(PsdError::ShapeMismatch(format!(
                "K = {k}, Q* is {:?}",
                qstar.shape()
            )));
        }
        check_gap(&spectrum, k)?;
        let v = spectrum.vectors.columns(0, k).into_owned();
        let signal = sigma * &v * qstar;
        Ok(Self {
            v,
            qstar: qstar.clone(),
            signal,
        })
    }

    /// Top-`K` eigenvectors of `Σ` as used by the builder.
    pub fn population_vectors(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn build(&self, sigma_hat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (local, h) = aligned_top_k(sigma_hat, &self.v)?;
        Ok(sigma_hat * &local.vectors * h * &self.qstar - &self.signal)
    }
}

/// `Êᵐ` for a single local covariance; see [`EhatBuilder`].
pub fn ehat_construct(
    sigma_hat: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    k: usize,
    qstar: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    EhatBuilder::new(sigma, k, qstar)?.build(sigma_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::reduced_cholesky;
    use nalgebra::dmatrix;

    #[test]
    fn strict_upper_examples() {
        let lower = dmatrix![1.0, 0.0; 5.0, 2.0];
        assert_eq!(strict_upper(&lower), DMatrix::zeros(2, 2));
        let p = dmatrix![1.0, 2.0; 3.0, 4.0];
        assert_eq!(strict_upper(&p), dmatrix![0.0, 2.0; 0.0, 0.0]);
        let rebuilt = strict_upper(&p)
            + strict_upper(&p.transpose()).transpose()
            + DMatrix::from_diagonal(&p.diagonal());
        assert_eq!(rebuilt, p);
    }

    #[test]
    fn f_r_examples() {
        let r = dmatrix![2.0, 0.0; 1.0, 3.0];
        let e = dmatrix![0.5, 0.0; -1.0, 2.0];
        assert_eq!(f_r(&r, &e).unwrap(), DMatrix::zeros(2, 2));

        let e = dmatrix![0.0, 1.0; 0.0, 0.0];
        assert_eq!(
            f_r(&DMatrix::identity(2, 2), &e).unwrap(),
            dmatrix![0.0, 1.0; -1.0, 0.0]
        );

        let r = dmatrix![2.0, 0.0; 0.0, 1.0];
        let e = dmatrix![0.0, 2.0; 0.0, 0.0];
        assert_eq!(f_r(&r, &e).unwrap(), dmatrix![0.0, 1.0; -1.0, 0.0]);

        let r = dmatrix![1.0, 0.0; 0.0, 0.0];
        assert!(matches!(f_r(&r, &e), Err(PsdError::Singular { .. })));
    }

    #[test]
    fn zero_noise_predictions_are_exact() {
        let r = dmatrix![2.0, 0.0; 1.0, 3.0];
        let t = 0.4_f64;
        let q = dmatrix![t.cos(), t.sin(); -t.sin(), t.cos()];
        let (qp, rp) = predict_lq(&r, &q, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(qp, q);
        assert_eq!(rp, r);

        let n = CholFactor::new(dmatrix![2.0, 0.0; 1.0, 1.0; 0.5, -1.0], IndexSet::canonical(2))
            .unwrap();
        let pred = predict_karcher_factor(&n, &[DMatrix::zeros(3, 2), DMatrix::zeros(3, 2)])
            .unwrap();
        assert_eq!(&pred, n.entries());
    }

    #[test]
    fn partition_roundtrip() {
        let idx = IndexSet::new(vec![2, 0], 4).unwrap();
        let f = dmatrix![1.0, 2.0; 0.5, -1.0; 3.0, 0.0; 0.2, 0.7];
        let n = reduced_cholesky(&(&f * f.transpose()), 2, &idx).unwrap();
        let parts = PartitionedFactor::split(&n);
        assert_eq!(parts.r[(0, 1)], 0.0);
        assert_eq!(parts.assemble().unwrap(), n);

        let split = NoiseSplit::split(&f, &idx);
        assert_eq!(split.e1, dmatrix![3.0, 0.0; 1.0, 2.0]);
        assert_eq!(split.assemble(&idx), f);
    }

    #[test]
    fn two_by_two_eigvec_expansion() {
        let delta = 1e-3;
        let spectrum = Spectrum::of(&dmatrix![2.0, 0.0; 0.0, 1.0]).unwrap();
        let e = dmatrix![0.0, delta; delta, 0.0];
        let v = eigvec_first_order(&spectrum, &e, 1).unwrap();
        assert!((v - dmatrix![1.0; delta]).amax() < 1e-15);
    }

    #[test]
    fn eigvec_zero_gap() {
        let spectrum = Spectrum::of(&DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(
            eigvec_first_order(&spectrum, &DMatrix::zeros(3, 3), 1),
            Err(PsdError::ZeroGap { .. })
        ));
    }

    #[test]
    fn qstar_examples() {
        let spectral = SpectralPair::new(dmatrix![1.0; 0.0], DVector::from_vec(vec![2.0])).unwrap();
        let n = CholFactor::new(dmatrix![2.0; 0.0], IndexSet::canonical(1)).unwrap();
        assert_eq!(qstar_from(&n, &spectral).unwrap(), dmatrix![1.0]);

        let n = CholFactor::new(dmatrix![1.0; 0.0], IndexSet::canonical(1)).unwrap();
        assert!(matches!(
            qstar_from(&n, &spectral),
            Err(PsdError::NotOrthogonal { .. })
        ));
    }

    #[test]
    fn ehat_vanishes_without_sampling_noise() {
        let sigma = dmatrix![4.0, 1.0, 0.0; 1.0, 3.0, 0.5; 0.0, 0.5, 1.0];
        let k = 2;
        let spectral = sym_eig_topk(&sigma, k, Positivity::Require).unwrap();
        let a = spectral.reconstruct_with(|l| l * l);
        let n = reduced_cholesky(&a, k, &IndexSet::canonical(k)).unwrap();
        let qstar = qstar_from(&n, &spectral).unwrap();
        let e = ehat_construct(&sigma, &sigma, k, &qstar).unwrap();
        assert!(e.amax() < 1e-12, "{e}");
    }
}
