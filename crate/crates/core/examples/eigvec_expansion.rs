//! First-order expansion of aligned eigenvectors, and the local error
//! matrices that express a machine's rank-K summary as signal plus noise.

use nalgebra::DMatrix;
use psdk::linalg::{reduced_factor_of, IndexSet, Spectrum};
use psdk::models::{gaussian_data, sample_cov, spiked_covariance, RngStream};
use psdk::perturbation::{aligned_top_k, eigvec_first_order, qstar_from, EhatBuilder};

fn main() -> psdk::Result<()> {
    let (p, k) = (30, 3);
    let stream = RngStream::new(9, 0);
    let sigma = spiked_covariance(p, k, &mut stream.derive(&[0]).rng()).sigma;
    let spectrum = Spectrum::of(&sigma)?;
    let top = spectrum.top(k);
    println!("eigen gap: {:.3}", spectrum.gap(k));

    for n in [500, 2000, 8000] {
        let cov = sample_cov(&gaussian_data(&sigma, n, &mut stream.derive(&[1, n as u64]).rng())?);
        let (local, h) = aligned_top_k(&cov, &top.vectors)?;
        let predicted = eigvec_first_order(&spectrum, &(&cov - &sigma), k)?;
        let exact = &local.vectors * h;
        println!(
            "n {n:>5}: |V̂Ĥ - V| {:.3e}, |V̂Ĥ - first order| {:.3e}",
            (&exact - &top.vectors).norm(),
            (&exact - predicted).norm()
        );
    }

    // Ê for one machine: (N + Ê)(N + Ê)ᵀ reproduces V̂Λ̂²V̂ᵀ exactly
    let factor = &top.vectors * DMatrix::from_diagonal(&top.values);
    let n_factor = reduced_factor_of(&factor, &IndexSet::canonical(k))?;
    let qstar = qstar_from(&n_factor, &top)?;
    let builder = EhatBuilder::new(&sigma, k, &qstar)?;
    let cov = sample_cov(&gaussian_data(&sigma, 1000, &mut stream.derive(&[2]).rng())?);
    let e = builder.build(&cov)?;
    let (local, _) = aligned_top_k(&cov, &top.vectors)?;
    let shifted = n_factor.entries() + &e;
    let gap = &shifted * shifted.transpose() - local.reconstruct_with(|l| l * l);
    println!("max|Ê| {:.3e}, identity residual {:.2e}", e.abs().max(), gap.abs().max());
    Ok(())
}
