//! Divide-and-conquer PCA: each machine sends its top-K eigenpairs and the
//! center combines them four ways.

use nalgebra::DMatrix;
use psdk::dpca::{dpca_bw, dpca_fan, find_index, full_pca, lrc_dpca, summarize};
use psdk::linalg::projector_distance;
use psdk::models::{gaussian_data, sample_cov, spiked_covariance, RngStream};

fn main() -> psdk::Result<()> {
    let (p, k, machines, n) = (50, 5, 20, 1000);
    let stream = RngStream::new(42, 0);
    let spiked = spiked_covariance(p, k, &mut stream.derive(&[0]).rng());
    let truth = spiked.true_subspace();

    let covs: Vec<DMatrix<f64>> = (0..machines)
        .map(|m| gaussian_data(&spiked.sigma, n, &mut stream.derive(&[1, m]).rng()).map(|x| sample_cov(&x)))
        .collect::<psdk::Result<_>>()?;
    let summaries = summarize(&covs, k)?;

    // cousin manifold picked from machine 1's summary, shared by everyone
    let first = &summaries[0].spectral;
    let idx = find_index(&first.vectors, &first.values, k)?;
    println!("index set from machine 1: {idx}");

    for result in [
        full_pca(&covs, k)?,
        lrc_dpca(&summaries, k, &idx)?,
        dpca_fan(&summaries, k)?,
        dpca_bw(&summaries, k)?,
    ] {
        println!(
            "{:>9}: projector error {:.4e}, gap {:.2}",
            result.method.name(),
            projector_distance(&result.v_est, &truth)?,
            result.diagnostics.gap
        );
    }
    Ok(())
}
