//! Seeded generative models: the intrinsic log-Cholesky noise model, the
//! signal-plus-noise assembly, Gaussian data with uncentered sample
//! covariances, and the extrinsic model that perturbs intrinsic draws with
//! finite-sample covariance noise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{PsdError, Result};
use crate::linalg::{
    orthonormal_basis, pivot_threshold, sym_eig_full, sym_eig_topk, symmetrize, CholFactor,
    IndexSet, Positivity,
};
use crate::manifold::{from_log_cholesky, log_cholesky, LogCholFactor, RPsdMatrix};

/// Diagonal loading added to every intrinsic draw before sampling data in
/// the extrinsic model.
pub const EXTRINSIC_JITTER: f64 = 0.01;

/// Default number of data points drawn per matrix in the extrinsic model.
pub const EXTRINSIC_N_INNER: usize = 2000;

/// Noise level of the isotropic part of the spiked covariance.
pub const SPIKED_NOISE: f64 = 0.3;

/// A reproducible random stream identified by `(master_seed, stream_id)`.
///
/// Streams are ChaCha8 keyed by the master seed, with the stream id selecting
/// one of its independent 2⁶⁴ streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Child stream whose id is a hash of this id and `tags`.
    pub fn derive(&self, tags: &[u64]) -> Self {
        let mut h = splitmix64(self.stream_id ^ 0x6a09_e667_f3bc_c908);
        for &t in tags {
            h = splitmix64(h ^ splitmix64(t.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        Self::new(self.master_seed, h)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalConstruction {
    /// `A = V Λ Vᵀ` from the top-`K` left singular pairs of a `p x p`
    /// standard Gaussian matrix.
    GaussianSvd,
    /// `Σ = V Vᵀ + 0.3 I_p` with `V` a `p x K` standard Gaussian matrix.
    Spiked,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    pub p: usize,
    pub k: usize,
    pub sigma_sq: f64,
    pub construction: SignalConstruction,
}

/// Population quantities produced from a [`SignalSpec`].
#[derive(Debug, Clone)]
pub enum Signal {
    Matrix(RPsdMatrix),
    Covariance(SpikedCovariance),
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.p {
            return Err(PsdError::ShapeMismatch(format!(
                "need p >= K >= 1, got p = {}, K = {}",
                self.p, self.k
            )));
        }
        if !(self.sigma_sq >= 0.0) {
            return Err(PsdError::ShapeMismatch(format!(
                "sigma_sq must be nonnegative, got {}",
                self.sigma_sq
            )));
        }
        Ok(())
    }

    pub fn build(&self, rng: &mut impl Rng) -> Result<Signal> {
        self.validate()?;
        Ok(match self.construction {
            SignalConstruction::GaussianSvd => Signal::Matrix(gaussian_svd_signal(self.p, self.k, rng)?),
            SignalConstruction::Spiked => Signal::Covariance(spiked_covariance(self.p, self.k, rng)),
        })
    }
}

/// `A = V diag(s) Vᵀ` where `(V, s)` are the top-`K` left singular vectors
/// and singular values of a `p x p` standard Gaussian matrix, on the
/// canonical manifold `S*(p, K)`.
pub fn gaussian_svd_signal(p: usize, k: usize, rng: &mut impl Rng) -> Result<RPsdMatrix> {
    let g = standard_normal_matrix(p, p, rng);
    let gram = symmetrize(&(&g * g.transpose()));
    let top = sym_eig_topk(&gram, k, Positivity::Require)?;
    let mut factor = top.vectors.clone();
    for (c, &l) in top.values.iter().enumerate() {
        // singular value s = sqrt(l); A = V s Vᵀ = (V s^½)(V s^½)ᵀ
        factor.column_mut(c).scale_mut(l.sqrt().sqrt());
    }
    RPsdMatrix::from_low_rank_factor(&factor, IndexSet::canonical(k))
}

/// Spiked covariance `Σ = L Lᵀ + 0.3 I` with Gaussian loadings `L`.
#[derive(Debug, Clone)]
pub struct SpikedCovariance {
    pub sigma: DMatrix<f64>,
    pub loadings: DMatrix<f64>,
}

impl SpikedCovariance {
    /// Orthonormal basis of the true top-`K` eigenspace, `span(L)`.
    pub fn true_subspace(&self) -> DMatrix<f64> {
        orthonormal_basis(&self.loadings)
    }
}

pub fn spiked_covariance(p: usize, k: usize, rng: &mut impl Rng) -> SpikedCovariance {
    let loadings = standard_normal_matrix(p, k, rng);
    let sigma = symmetrize(&(&loadings * loadings.transpose()))
        + DMatrix::<f64>::identity(p, p) * SPIKED_NOISE;
    SpikedCovariance { sigma, loadings }
}

/// Draws a noise matrix supported on the mock lower triangular pattern of
/// `index_set`, with i.i.d. `N(0, sigma²)` entries there and zeros elsewhere.
pub fn mock_lower_noise(
    p: usize,
    index_set: &IndexSet,
    sigma: f64,
    rng: &mut impl Rng,
) -> DMatrix<f64> {
    let k = index_set.len();
    let mut above = vec![usize::MAX; p];
    for (pos, &row) in index_set.as_slice().iter().enumerate() {
        above[row] = pos;
    }
    DMatrix::from_fn(p, k, |r, c| {
        let z: f64 = rng.sample(StandardNormal);
        if above[r] != usize::MAX && c > above[r] {
            0.0
        } else {
            sigma * z
        }
    })
}

/// Intrinsic model: `Aᵐ = h⁻¹ ∘ g⁻¹(N' + Eᵐ)` with `N' = g ∘ h(A)` and
/// mock-lower-triangular Gaussian noise `Eᵐ` of standard deviation `sigma`.
pub fn intrinsic_sample(
    a: &RPsdMatrix,
    sigma: f64,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<RPsdMatrix>> {
    let base = log_cholesky(a)?;
    let idx = a.index_set().clone();
    (0..count)
        .map(|_| {
            let e = mock_lower_noise(a.p(), &idx, sigma, rng);
            let point = LogCholFactor::new(base.entries() + e, idx.clone())?;
            Ok(from_log_cholesky(&point))
        })
        .collect()
}

/// Signal-plus-noise assembly `Aᵐ = (N + Eᵐ)(N + Eᵐ)ᵀ`.
///
/// Fails with the index of the first sample whose `I`-block is singular.
pub fn spn_build(n: &CholFactor, es: &[DMatrix<f64>]) -> Result<Vec<RPsdMatrix>> {
    es.iter()
        .enumerate()
        .map(|(index, e)| {
            if e.shape() != n.entries().shape() {
                return Err(PsdError::ShapeMismatch(format!(
                    "noise {index} is {:?}, factor is {:?}",
                    e.shape(),
                    n.entries().shape()
                )));
            }
            RPsdMatrix::from_low_rank_factor(&(n.entries() + e), n.index_set().clone()).map_err(
                |err| match err {
                    PsdError::NotInManifold { reason } => {
                        PsdError::SampleNotInManifold { index, reason }
                    }
                    other => other,
                },
            )
        })
        .collect()
}

/// A factor `F` with `F Fᵀ = Σ`: the Cholesky factor when `Σ` is positive
/// definite, otherwise `V Λ^½` from the eigendecomposition.
pub fn covariance_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    crate::linalg::ensure_symmetric(sigma)?;
    if let Some(chol) = sigma.clone().cholesky() {
        return Ok(chol.l());
    }
    let (values, mut vectors) = sym_eig_full(sigma)?;
    let min = values[values.len() - 1];
    if min < -pivot_threshold(sigma).max(1e-12) {
        return Err(PsdError::NotPsd {
            min_eigenvalue: min,
        });
    }
    for (c, &l) in values.iter().enumerate() {
        vectors.column_mut(c).scale_mut(l.max(0.0).sqrt());
    }
    Ok(vectors)
}

/// `n` i.i.d. rows from `N(0, Σ)`, as an `n x p` matrix.
pub fn gaussian_data(sigma: &DMatrix<f64>, n: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let f = covariance_factor(sigma)?;
    Ok(gaussian_data_with_factor(&f, n, rng))
}

pub fn gaussian_data_with_factor(factor: &DMatrix<f64>, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let z = standard_normal_matrix(n, factor.ncols(), rng);
    z * factor.transpose()
}

/// Uncentered sample covariance `(1/n) Σᵢ xᵢxᵢᵀ` of the rows of `x`.
pub fn sample_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows().max(1) as f64;
    symmetrize(&(x.tr_mul(x) / n))
}

/// Extrinsic model: intrinsic draws `Aᵐ`, each replaced by the best rank-`K`
/// approximation of the sample covariance of `n_inner` points from
/// `N(0, Aᵐ + 0.01 I)`.
pub fn extrinsic_sample(
    a: &RPsdMatrix,
    sigma_sq: f64,
    count: usize,
    n_inner: usize,
    rng: &mut impl Rng,
) -> Result<Vec<RPsdMatrix>> {
    if !(sigma_sq >= 0.0) {
        return Err(PsdError::ShapeMismatch(format!(
            "sigma_sq must be nonnegative, got {sigma_sq}"
        )));
    }
    let intrinsic = intrinsic_sample(a, sigma_sq.sqrt(), count, rng)?;
    let p = a.p();
    let jitter = DMatrix::<f64>::identity(p, p) * EXTRINSIC_JITTER;
    intrinsic
        .iter()
        .enumerate()
        .map(|(index, am)| {
            let x = gaussian_data(&(am.matrix() + &jitter), n_inner, rng)?;
            let cov = sample_cov(&x);
            let top = sym_eig_topk(&cov, a.rank(), Positivity::Require)?;
            let scale = DVector::from_iterator(top.k(), top.values.iter().map(|l| l.sqrt()));
            let factor = top.vectors * DMatrix::from_diagonal(&scale);
            RPsdMatrix::from_low_rank_factor(&factor, a.index_set().clone()).map_err(|err| match err {
                PsdError::NotInManifold { reason } => PsdError::SampleNotInManifold { index, reason },
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, reduced_cholesky};
    use nalgebra::dmatrix;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngStream::new(7, 0);
        let a: Vec<u64> = (0..4).map(|_| s.rng().random()).collect();
        let b: Vec<u64> = (0..4).map(|_| s.rng().random()).collect();
        assert_eq!(a, b);
        let mut r1 = s.derive(&[1, 2]).rng();
        let mut r2 = s.derive(&[2, 1]).rng();
        assert_ne!(r1.random::<u64>(), r2.random::<u64>());
        assert_eq!(s.derive(&[3]), s.derive(&[3]));
    }

    #[test]
    fn zero_noise_intrinsic_draws_equal_signal() {
        let mut rng = RngStream::new(1, 0).rng();
        let a = gaussian_svd_signal(6, 2, &mut rng).unwrap();
        for am in intrinsic_sample(&a, 0.0, 3, &mut rng).unwrap() {
            assert!(max_abs(&(am.matrix() - a.matrix())) < 1e-12);
        }
    }

    #[test]
    fn scalar_intrinsic_model_is_log_normal() {
        let mut rng = RngStream::new(11, 0).rng();
        let a = RPsdMatrix::canonical(dmatrix![1.0], 1).unwrap();
        let draws = intrinsic_sample(&a, 1.0, 10_000, &mut rng).unwrap();
        // A^m = e^{2 eps}; half its log is eps ~ N(0, 1)
        let mean = draws.iter().map(|d| 0.5 * d.matrix()[(0, 0)].ln()).sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn noise_support_is_mock_lower() {
        let mut rng = RngStream::new(3, 0).rng();
        let idx = IndexSet::new(vec![3, 1, 4], 6).unwrap();
        let e = mock_lower_noise(6, &idx, 1.0, &mut rng);
        for (k, &row) in idx.as_slice().iter().enumerate() {
            for l in 0..3 {
                assert_eq!(e[(row, l)] == 0.0, l > k, "row {row} col {l}");
            }
        }
    }

    #[test]
    fn spn_examples() {
        let n = CholFactor::new(dmatrix![1.0; 0.0], IndexSet::canonical(1)).unwrap();
        let out = spn_build(&n, &[DMatrix::zeros(2, 1), dmatrix![0.0; 1.0]]).unwrap();
        assert_eq!(out[0].matrix(), &dmatrix![1.0, 0.0; 0.0, 0.0]);
        assert_eq!(out[1].matrix(), &dmatrix![1.0, 1.0; 1.0, 1.0]);

        let err = spn_build(&n, &[DMatrix::zeros(2, 1), dmatrix![-1.0; 1.0]]).unwrap_err();
        assert!(matches!(err, PsdError::SampleNotInManifold { index: 1, .. }));
    }

    #[test]
    fn spn_factor_matches_lq_rotation() {
        let f = dmatrix![2.0, 0.0; 0.5, 1.5; 1.0, -1.0; 0.3, 0.2];
        let n = CholFactor::new(f, IndexSet::canonical(2)).unwrap();
        let e = dmatrix![0.1, 0.3; -0.2, 0.05; 0.0, 0.1; 0.4, -0.3];
        let am = &spn_build(&n, std::slice::from_ref(&e)).unwrap()[0];
        let moved = n.entries() + &e;
        let block = moved.rows(0, 2).into_owned();
        let (_, q) = crate::linalg::lq_givens(&block).unwrap();
        let expected = &moved * q.transpose();
        let got = reduced_cholesky(am.matrix(), 2, &IndexSet::canonical(2)).unwrap();
        assert!(max_abs(&(got.entries() - expected)) < 1e-12);
    }

    #[test]
    fn single_row_sample_cov() {
        let x = dmatrix![1.0, -2.0, 0.5];
        assert_eq!(sample_cov(&x), x.transpose() * &x);
    }

    #[test]
    fn gaussian_data_rejects_indefinite() {
        let mut rng = RngStream::new(0, 0).rng();
        let sigma = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(matches!(
            gaussian_data(&sigma, 5, &mut rng),
            Err(PsdError::NotPsd { .. })
        ));
        // singular PSD input goes through the eigen factor
        let sigma = dmatrix![1.0, 1.0; 1.0, 1.0];
        let x = gaussian_data(&sigma, 5, &mut rng).unwrap();
        for r in 0..5 {
            assert!((x[(r, 0)] - x[(r, 1)]).abs() < 1e-12);
        }
    }

    #[test]
    fn extrinsic_output_has_rank_k() {
        let mut rng = RngStream::new(5, 0).rng();
        let a = gaussian_svd_signal(8, 2, &mut rng).unwrap();
        let out = extrinsic_sample(&a, 0.1, 3, 200, &mut rng).unwrap();
        for am in &out {
            let m = crate::manifold::membership_check(am.matrix(), 2, am.index_set());
            assert!(m.is_member, "{m:?}");
        }
    }
}
