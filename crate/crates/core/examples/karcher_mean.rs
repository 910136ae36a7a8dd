//! Averaging noisy low-rank PSD matrices: the closed-form Karcher mean
//! against the Euclidean rank-K mean as the number of samples grows.

use psdk::dpca::euclid_rankk_mean;
use psdk::manifold::karcher_mean;
use psdk::models::{gaussian_svd_signal, intrinsic_sample, RngStream};

fn main() -> psdk::Result<()> {
    let (p, k, sigma_sq) = (40, 4, 1.0);
    let stream = RngStream::new(2024, 0);
    let a = gaussian_svd_signal(p, k, &mut stream.derive(&[0]).rng())?;

    println!("{:>5} {:>12} {:>12}", "M", "karcher", "euclidean");
    for m in [10, 40, 160, 640] {
        let draws = intrinsic_sample(&a, f64::sqrt(sigma_sq), m, &mut stream.derive(&[1, m as u64]).rng())?;
        let lrc = karcher_mean(&draws)?;
        let euc = euclid_rankk_mean(&draws, k)?;
        println!(
            "{m:>5} {:>12.4} {:>12.4}",
            (lrc.matrix() - a.matrix()).norm(),
            (euc.matrix() - a.matrix()).norm()
        );
    }
    Ok(())
}
