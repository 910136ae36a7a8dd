mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::*;
use psdk::dpca::{dpca_bw, dpca_fan, full_pca, lrc_dpca, summarize};
use psdk::experiments::{random_orthogonal, run, ExperimentConfig, ExperimentKind};
use psdk::linalg::{
    lq_givens, lq_givens_with_order, max_abs, orthonormal_basis, orthonormality_defect,
    procrustes_sign, projector_distance, reduced_cholesky, reduced_factor_of, symmetrize, IndexSet,
};
use psdk::manifold::{
    from_log_cholesky, geodesic_distance, karcher_mean, log_cholesky, RPsdMatrix,
};
use psdk::models::{gaussian_data, intrinsic_sample, sample_cov, spiked_covariance};
use psdk::perturbation::{f_r, strict_upper};

fn dims(max_p: usize, max_k: usize) -> impl Strategy<Value = (usize, usize, u64)> {
    (1..=max_k)
        .prop_flat_map(move |k| (k..=max_p, Just(k), any::<u64>()))
        .prop_map(|(p, k, seed)| (p, k, seed))
}

fn point(p: usize, k: usize, rng: &mut impl rand::Rng) -> RPsdMatrix {
    let idx = random_index_set(p, k, rng);
    RPsdMatrix::new(random_factor(p, &idx, rng).gram(), k, idx).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_cholesky_round_trip((p, k, seed) in dims(15, 5)) {
        let mut r = rng(seed);
        let a = point(p, k, &mut r);
        let back = from_log_cholesky(&log_cholesky(&a).unwrap());
        prop_assert!(max_abs(&(back.matrix() - a.matrix())) < 1e-10);
    }

    #[test]
    fn factor_and_gram_routes_agree((p, k, seed) in dims(15, 5)) {
        let mut r = rng(seed);
        let idx = random_index_set(p, k, &mut r);
        let f = gauss(p, k, &mut r);
        let a = symmetrize(&(&f * f.transpose()));
        let via_f = reduced_factor_of(&f, &idx).unwrap();
        let via_a = reduced_cholesky(&a, k, &idx).unwrap();
        let scale = 1.0 + max_abs(via_f.entries());
        prop_assert!(max_abs(&(via_f.entries() - via_a.entries())) < 1e-6 * scale);
    }

    #[test]
    fn lq_is_exact_and_order_free(k in 1usize..7, seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = gauss(k, k, &mut r) + DMatrix::identity(k, k) * 3.0;
        let (l, q) = lq_givens(&m).unwrap();
        prop_assert!(max_abs(&(&l * &q - &m)) < 1e-12 * (1.0 + max_abs(&m)));
        prop_assert!(orthonormality_defect(&q) < 1e-12);
        prop_assert!(max_abs(&strict_upper(&l)) == 0.0);
        prop_assert!((0..k).all(|i| l[(i, i)] > 0.0));
        // same row order, columns reversed within each row
        let mut order = Vec::new();
        for i in 0..k {
            for j in ((i + 1)..k).rev() {
                order.push((i, j));
            }
        }
        let (l2, q2) = lq_givens_with_order(&m, &order).unwrap();
        prop_assert!(max_abs(&(l2 - &l)) < 1e-10 && max_abs(&(q2 - &q)) < 1e-10);
    }

    #[test]
    fn procrustes_alignment_is_optimal(p in 3usize..12, seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = 1 + (seed as usize % (p - 1)).min(3);
        let v = orthonormal_basis(&gauss(p, k, &mut r));
        let vhat = orthonormal_basis(&(&v + gauss(p, k, &mut r) * 0.3));
        let h = procrustes_sign(&(vhat.transpose() * &v)).unwrap();
        let best = (&vhat * &h - &v).norm();
        for _ in 0..20 {
            let o = random_orthogonal(k, &mut r);
            prop_assert!(best <= (&vhat * o - &v).norm() + 1e-12);
        }
    }

    #[test]
    fn projector_distance_is_a_metric(p in 3usize..12, seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = 1 + (seed as usize % (p - 1)).min(3);
        let vs: Vec<DMatrix<f64>> = (0..3).map(|_| orthonormal_basis(&gauss(p, k, &mut r))).collect();
        let d = |a: &DMatrix<f64>, b: &DMatrix<f64>| projector_distance(a, b).unwrap();
        prop_assert!(d(&vs[0], &vs[0]) < 1e-12);
        prop_assert!((d(&vs[0], &vs[1]) - d(&vs[1], &vs[0])).abs() < 1e-12);
        prop_assert!(d(&vs[0], &vs[2]) <= d(&vs[0], &vs[1]) + d(&vs[1], &vs[2]) + 1e-12);
        let rotated = &vs[0] * random_orthogonal(k, &mut r);
        prop_assert!(d(&vs[0], &rotated) < 1e-10);
    }

    #[test]
    fn geodesic_distance_axioms((p, k, seed) in dims(10, 3)) {
        let mut r = rng(seed);
        let a = point(p, k, &mut r);
        let idx = a.index_set().clone();
        let pts = intrinsic_sample(&a, 0.3, 2, &mut r).unwrap();
        let (b, c) = (&pts[0], &pts[1]);
        let d = |x: &RPsdMatrix, y: &RPsdMatrix| geodesic_distance(x, y).unwrap();
        prop_assert!(d(&a, &a) == 0.0);
        prop_assert!((d(&a, b) - d(b, &a)).abs() < 1e-12);
        prop_assert!(d(&a, c) <= d(&a, b) + d(b, c) + 1e-10);
        prop_assert_eq!(b.index_set(), &idx);
    }

    #[test]
    fn karcher_mean_ignores_order((p, k, seed) in dims(10, 3), m in 2usize..8) {
        let mut r = rng(seed);
        let a = point(p, k, &mut r);
        let mut pts = intrinsic_sample(&a, 0.5, m, &mut r).unwrap();
        let forward = karcher_mean(&pts).unwrap();
        pts.reverse();
        let backward = karcher_mean(&pts).unwrap();
        prop_assert!(max_abs(&(forward.matrix() - backward.matrix())) < 1e-10 * (1.0 + max_abs(a.matrix())));
        let single = karcher_mean(&pts[..1]).unwrap();
        prop_assert!(max_abs(&(single.matrix() - pts[0].matrix())) < 1e-10 * (1.0 + max_abs(a.matrix())));
    }

    #[test]
    fn f_r_is_linear_and_skew(k in 1usize..6, seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let mut r = rng(seed);
        let rr = psdk::experiments::random_lower(k, &mut r);
        let (e1, e2) = (gauss(k, k, &mut r), gauss(k, k, &mut r));
        let f1 = f_r(&rr, &e1).unwrap();
        let f2 = f_r(&rr, &e2).unwrap();
        let f12 = f_r(&rr, &(&e1 * alpha + &e2)).unwrap();
        prop_assert!(max_abs(&(f12 - (&f1 * alpha + &f2))) < 1e-10 * (1.0 + max_abs(&f1) + max_abs(&f2)));
        prop_assert!(max_abs(&(&f1 + f1.transpose())) == 0.0);
        // R - R f_R(E) + E stays lower triangular to first order
        let lower = &e1 - &rr * &f1;
        prop_assert!(max_abs(&strict_upper(&lower)) < 1e-10 * (1.0 + max_abs(&e1)));
    }

    #[test]
    fn aggregators_ignore_machine_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (p, k) = (12, 2);
        let sigma = spiked_covariance(p, k, &mut r).sigma;
        let covs: Vec<DMatrix<f64>> = (0..4)
            .map(|_| sample_cov(&gaussian_data(&sigma, 200, &mut r).unwrap()))
            .collect();
        let mut rev = covs.clone();
        rev.reverse();
        let (s, sr) = (summarize(&covs, k).unwrap(), summarize(&rev, k).unwrap());
        let idx = IndexSet::canonical(k);
        let pairs = [
            (full_pca(&covs, k).unwrap().v_est, full_pca(&rev, k).unwrap().v_est),
            (lrc_dpca(&s, k, &idx).unwrap().v_est, lrc_dpca(&sr, k, &idx).unwrap().v_est),
            (dpca_fan(&s, k).unwrap().v_est, dpca_fan(&sr, k).unwrap().v_est),
            (dpca_bw(&s, k).unwrap().v_est, dpca_bw(&sr, k).unwrap().v_est),
        ];
        for (a, b) in pairs {
            prop_assert!(projector_distance(&a, &b).unwrap() < 1e-8);
        }
    }
}

#[test]
fn experiments_are_reproducible_across_thread_counts() {
    let mut cfg = ExperimentConfig::quick(ExperimentKind::Dpca);
    cfg.p_grid = vec![20];
    cfg.n_grid = vec![200, 400];
    cfg.m_grid = vec![4, 8];
    cfg.m_fixed = 4;
    cfg.n_fixed = 200;
    cfg.repetitions = 3;
    cfg.master_seed = 11;
    let a = run(&cfg, Some(1)).unwrap();
    let b = run(&cfg, Some(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.records.len(), 4 * 4 * 3);
    assert!(a.records.iter().all(|r| r.error.is_finite() && r.error >= 0.0));
    cfg.master_seed = 12;
    assert_ne!(run(&cfg, Some(1)).unwrap().records, a.records);
}

#[test]
fn noise_free_intrinsic_run_is_exact() {
    let mut cfg = ExperimentConfig::quick(ExperimentKind::IntrinsicAvg);
    cfg.p_grid = vec![15];
    cfg.m_grid = vec![3, 6];
    cfg.sigma_sq = 0.0;
    cfg.repetitions = 2;
    let out = run(&cfg, None).unwrap();
    assert_eq!(out.records.len(), 2 * 2 * 2);
    assert!(out.records.iter().all(|r| r.error < 1e-8), "{:?}", out.records);
}
