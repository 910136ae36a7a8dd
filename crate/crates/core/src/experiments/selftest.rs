use nalgebra::DMatrix;

use super::runners::{random_lower, random_mock_lower_factor, random_orthogonal, unit_max_noise};
use crate::dpca::{find_index, lrc_dpca, LocalSummary};
use crate::linalg::{lq_givens, max_abs, reduced_cholesky, sym_eig_topk, Positivity};
use crate::manifold::{from_log_cholesky, karcher_mean, log_cholesky, RPsdMatrix};
use crate::models::{gaussian_svd_signal, intrinsic_sample, RngStream};
use crate::perturbation::lq_prediction_remainder;

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, bound: f64) -> SelftestCheck {
    SelftestCheck {
        name,
        passed: value.is_finite() && value < bound,
        detail: format!("{value:.3e} < {bound:.0e}"),
    }
}

/// A handful of fast numerical sanity checks.
pub fn selftest(seed: u64) -> Vec<SelftestCheck> {
    let stream = RngStream::new(seed, 0);
    let mut out = Vec::new();

    let mut rng = stream.derive(&[0]).rng();
    let n = random_mock_lower_factor(12, 3, &mut rng);
    let gram = n.gram();
    let back = reduced_cholesky(&gram, 3, n.index_set())
        .map(|m| max_abs(&(m.entries() - n.entries())))
        .unwrap_or(f64::INFINITY);
    out.push(check("reduced_cholesky round trip", back, 1e-8));

    let a = RPsdMatrix::new(gram, 3, n.index_set().clone());
    let rt = a
        .and_then(|a| {
            let back = from_log_cholesky(&log_cholesky(&a)?);
            Ok(max_abs(&(back.matrix() - a.matrix())))
        })
        .unwrap_or(f64::INFINITY);
    out.push(check("log-Cholesky round trip", rt, 1e-8));

    let mut rng = stream.derive(&[1]).rng();
    let r = random_lower(4, &mut rng);
    let q = random_orthogonal(4, &mut rng);
    let lq = lq_givens(&(&r * &q))
        .map(|(r2, q2)| max_abs(&(r2 - &r)).max(max_abs(&(q2 - &q))))
        .unwrap_or(f64::INFINITY);
    out.push(check("Givens LQ uniqueness", lq, 1e-10));
    let e = unit_max_noise(4, 4, None, &mut rng);
    let ratio = match (
        lq_prediction_remainder(&r, &q, &(&e * 1e-3)),
        lq_prediction_remainder(&r, &q, &(&e * 5e-4)),
    ) {
        (Ok(a), Ok(b)) if b > 0.0 => a / b,
        _ => f64::NAN,
    };
    out.push(SelftestCheck {
        name: "LQ prediction remainder is quadratic",
        passed: (3.0..5.0).contains(&ratio),
        detail: format!("halving eps shrinks remainder by {ratio:.3}"),
    });

    let mut rng = stream.derive(&[2]).rng();
    let karcher = gaussian_svd_signal(15, 3, &mut rng)
        .and_then(|a| {
            let draws = intrinsic_sample(&a, 0.0, 5, &mut rng)?;
            Ok(max_abs(&(karcher_mean(&draws)?.matrix() - a.matrix())))
        })
        .unwrap_or(f64::INFINITY);
    out.push(check("noise-free Karcher mean", karcher, 1e-8));

    let mut t = DMatrix::from_fn(10, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 + 1.0);
    t.row_mut(0).fill(0.0);
    let lrc = sym_eig_topk(&(&t * t.transpose()), 2, Positivity::Require)
        .and_then(|sp| {
            let idx = find_index(&sp.vectors, &sp.values, 2)?;
            let summary = LocalSummary {
                machine_id: 0,
                spectral: sp,
            };
            lrc_dpca(&[summary], 2, &idx)?;
            Ok(idx)
        });
    out.push(SelftestCheck {
        name: "find_index avoids a zero row",
        passed: matches!(&lrc, Ok(idx) if !idx.as_slice().contains(&0)),
        detail: match &lrc {
            Ok(idx) => format!("index set {idx}"),
            Err(e) => e.to_string(),
        },
    });
    out
}
