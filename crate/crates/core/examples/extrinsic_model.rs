//! Extrinsic noise: each intrinsic draw is replaced by the rank-K truncation
//! of a finite-sample covariance. The Karcher mean still beats the Euclidean
//! mean once the intrinsic spread is large.

use psdk::dpca::euclid_rankk_mean;
use psdk::manifold::karcher_mean;
use psdk::models::{extrinsic_sample, gaussian_svd_signal, RngStream};

fn main() -> psdk::Result<()> {
    let (p, k, m, n_inner) = (30, 3, 100, 1000);
    let stream = RngStream::new(17, 0);
    let a = gaussian_svd_signal(p, k, &mut stream.derive(&[0]).rng())?;
    println!("{:>8} {:>10} {:>10}", "sigma_sq", "karcher", "euclidean");
    for sigma_sq in [0.0, 0.2, 0.5] {
        let draws = extrinsic_sample(&a, sigma_sq, m, n_inner, &mut stream.derive(&[1, sigma_sq.to_bits()]).rng())?;
        let lrc = karcher_mean(&draws)?;
        let euc = euclid_rankk_mean(&draws, k)?;
        println!(
            "{sigma_sq:>8.2} {:>10.4} {:>10.4}",
            (lrc.matrix() - a.matrix()).norm(),
            (euc.matrix() - a.matrix()).norm()
        );
    }
    Ok(())
}
