//! When the leading rows of `VΛ` are degenerate the canonical manifold is
//! unusable; `find_index` picks a cousin manifold that works.

use nalgebra::{DMatrix, DVector};
use psdk::dpca::{find_index, lrc_dpca, LocalSummary};
use psdk::linalg::{orthonormal_basis, select_rows, sigma_min, SpectralPair};
use psdk::models::{standard_normal_matrix, RngStream};

fn main() -> psdk::Result<()> {
    let (p, k) = (12, 3);
    let mut rng = RngStream::new(3, 0).rng();
    let mut f = standard_normal_matrix(p, k, &mut rng);
    f.row_mut(0).fill(0.0);
    f.row_mut(2).fill(0.0);
    let v = orthonormal_basis(&f);
    let lambda = DVector::from_vec(vec![3.0, 2.0, 1.0]);
    let t = &v * DMatrix::from_diagonal(&lambda);

    let canonical: Vec<usize> = (0..k).collect();
    println!("sigma_K(T[0..K]) = {:.2e}", sigma_min(&select_rows(&t, &canonical)));

    let idx = find_index(&v, &lambda, k)?;
    println!("find_index -> {idx}, sigma_K(T[I]) = {:.3}", sigma_min(&select_rows(&t, idx.as_slice())));

    let summary = LocalSummary {
        machine_id: 0,
        spectral: SpectralPair::new(v, lambda)?,
    };
    let canonical = lrc_dpca(std::slice::from_ref(&summary), k, &psdk::IndexSet::canonical(k));
    println!("lrc_dpca on the canonical manifold: {:?}", canonical.err());
    let on_cousin = lrc_dpca(&[summary], k, &idx)?;
    println!("lrc_dpca on the cousin manifold: gap {:.3}", on_cousin.diagnostics.gap);
    Ok(())
}
