//! Givens LQ factors of a perturbed product `RQ + E` and their first-order
//! prediction. Halving the noise should cut the remainder by about four.

use psdk::experiments::{random_lower, random_orthogonal, unit_max_noise};
use psdk::linalg::lq_givens;
use psdk::models::RngStream;
use psdk::perturbation::{f_r, lq_prediction_remainder};

fn main() -> psdk::Result<()> {
    let mut rng = RngStream::new(5, 0).rng();
    let k = 5;
    let r = random_lower(k, &mut rng);
    let q = random_orthogonal(k, &mut rng);
    let e = unit_max_noise(k, k, None, &mut rng);

    let (r2, q2) = lq_givens(&(&r * &q))?;
    println!(
        "unperturbed factors recovered: |R err| {:.1e}, |Q err| {:.1e}",
        (r2 - &r).abs().max(),
        (q2 - &q).abs().max()
    );
    println!("f_R(E Qᵀ) is skew:\n{:.4}", f_r(&r, &(&e * q.transpose()))?);

    let mut last: Option<f64> = None;
    for eps in [1e-2, 5e-3, 2.5e-3, 1.25e-3] {
        let rem = lq_prediction_remainder(&r, &q, &(&e * eps))?;
        match last {
            Some(prev) => println!("eps {eps:.2e}: remainder {rem:.3e} (ratio {:.2})", prev / rem),
            None => println!("eps {eps:.2e}: remainder {rem:.3e}"),
        }
        last = Some(rem);
    }
    Ok(())
}
