#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use psdk::linalg::{orthonormal_basis, CholFactor, IndexSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    psdk::models::RngStream::new(seed, 77).rng()
}

pub fn gauss(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random ordered index set (not necessarily increasing).
pub fn random_index_set(p: usize, k: usize, rng: &mut impl Rng) -> IndexSet {
    let mut rows: Vec<usize> = (0..p).collect();
    rows.shuffle(rng);
    rows.truncate(k);
    IndexSet::new(rows, p).unwrap()
}

/// Random factor on the mock lower pattern of `idx`, diagonal positions in
/// `[1, 2]`, other entries `N(0, 1/4)`.
pub fn random_factor(p: usize, idx: &IndexSet, rng: &mut impl Rng) -> CholFactor {
    let k = idx.len();
    let mut n = gauss(p, k, rng) * 0.5;
    for (pos, &row) in idx.as_slice().iter().enumerate() {
        for c in pos + 1..k {
            n[(row, c)] = 0.0;
        }
        n[(row, pos)] = 1.0 + rng.random::<f64>();
    }
    CholFactor::new(n, idx.clone()).unwrap()
}

/// Noise supported on the mock lower pattern of `idx`.
pub fn pattern_noise(p: usize, idx: &IndexSet, scale: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    psdk::models::mock_lower_noise(p, idx, scale, rng)
}

/// Orthonormal `p x k` basis and a strictly decreasing positive spectrum.
pub fn random_spectral(p: usize, k: usize, rng: &mut impl Rng) -> (DMatrix<f64>, DVector<f64>) {
    let v = orthonormal_basis(&gauss(p, k, rng));
    let mut vals: Vec<f64> = (0..k).map(|_| 0.5 + 4.0 * rng.random::<f64>()).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    for i in 1..k {
        if vals[i] >= vals[i - 1] {
            vals[i] = vals[i - 1] * 0.9;
        }
    }
    (v, DVector::from_vec(vals))
}
