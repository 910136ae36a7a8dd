use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use super::{execute, ExperimentConfig, IndexMode, RunError, RunOutput, RunRecord, TaskOutput};
use crate::dpca::{dpca_bw, dpca_fan, euclid_rankk_mean, find_index, full_pca, lrc_dpca, summarize, DpcaResult, LocalSummary};
use crate::error::PsdError;
use crate::linalg::{
    max_abs, projector_distance, sym_eig_topk, CholFactor, IndexSet, Positivity,
};
use crate::manifold::{karcher_mean, RPsdMatrix};
use crate::models::{
    covariance_factor, extrinsic_sample, gaussian_data_with_factor, gaussian_svd_signal,
    intrinsic_sample, mock_lower_noise, sample_cov, spiked_covariance, standard_normal_matrix,
    RngStream,
};
use crate::perturbation::{karcher_prediction_remainder, lq_prediction_remainder};

const TAG_SIGNAL: u64 = 1;
const TAG_SAMPLE: u64 = 2;
const TAG_INSTANCE: u64 = 3;

fn timed<T>(on: bool, f: impl FnOnce() -> T) -> (T, f64) {
    if !on {
        return (f(), 0.0);
    }
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64() * 1e3)
}

fn frobenius_error(est: &RPsdMatrix, truth: &RPsdMatrix) -> f64 {
    (est.matrix() - truth.matrix()).norm()
}

fn root(cfg: &ExperimentConfig) -> RngStream {
    RngStream::new(cfg.master_seed, 0)
}

#[derive(Debug, Clone, Copy)]
struct Point {
    sweep: usize,
    p: usize,
    m: usize,
    n: usize,
    sigma_sq: f64,
    rep: usize,
}

impl Point {
    fn label(&self) -> String {
        format!(
            "sweep={} p={} M={} n={} sigma_sq={} rep={}",
            self.sweep, self.p, self.m, self.n, self.sigma_sq, self.rep
        )
    }

    fn record(&self, cfg: &ExperimentConfig, method: &'static str, error: f64, ms: f64) -> RunRecord {
        RunRecord {
            experiment: cfg.experiment.name(),
            sweep: self.sweep,
            method,
            p: self.p,
            k: cfg.k,
            m: self.m,
            n: self.n,
            sigma_sq: self.sigma_sq,
            repetition: self.rep,
            seed: cfg.master_seed,
            error,
            wall_time_ms: ms,
        }
    }

    fn sample_stream(&self, cfg: &ExperimentConfig) -> RngStream {
        root(cfg).derive(&[
            TAG_SAMPLE,
            self.sweep as u64,
            self.p as u64,
            self.m as u64,
            self.n as u64,
            self.sigma_sq.to_bits(),
            self.rep as u64,
        ])
    }
}

fn signal_stream(cfg: &ExperimentConfig, p: usize, rep: usize) -> RngStream {
    root(cfg).derive(&[TAG_SIGNAL, p as u64, rep as u64])
}

fn with_reps(cfg: &ExperimentConfig, points: impl IntoIterator<Item = Point>) -> Vec<Point> {
    points
        .into_iter()
        .flat_map(|pt| (0..cfg.repetitions).map(move |rep| Point { rep, ..pt }))
        .collect()
}

/// Karcher mean versus Euclidean rank-`K` mean of intrinsic draws around a
/// Gaussian-SVD signal; errors are `‖Ã − A‖_F`.
pub fn run_intrinsic(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let mut grid = Vec::new();
    for &p in &cfg.p_grid {
        for &m in &cfg.m_grid {
            grid.push(Point { sweep: 0, p, m, n: 0, sigma_sq: cfg.sigma_sq, rep: 0 });
        }
    }
    let tasks = with_reps(cfg, grid);
    execute(threads, &tasks, |pt| {
        let at = || RunError::at(pt.label());
        let a = gaussian_svd_signal(pt.p, cfg.k, &mut signal_stream(cfg, pt.p, pt.rep).rng())
            .map_err(at())?;
        let draws = intrinsic_sample(&a, pt.sigma_sq.sqrt(), pt.m, &mut pt.sample_stream(cfg).rng())
            .map_err(at())?;
        let (lrc, t_lrc) = timed(cfg.timing, || karcher_mean(&draws));
        let (euc, t_euc) = timed(cfg.timing, || euclid_rankk_mean(&draws, cfg.k));
        Ok(TaskOutput {
            records: vec![
                pt.record(cfg, "lrc", frobenius_error(&lrc.map_err(at())?, &a), t_lrc),
                pt.record(cfg, "euclidean", frobenius_error(&euc.map_err(at())?, &a), t_euc),
            ],
            failures: Vec::new(),
        })
    })
}

/// LRC-dPCA with the configured index policy. `None` when no index set
/// works; the reasons are appended to `failures`.
fn lrc_with_policy(
    cfg: &ExperimentConfig,
    summaries: &[LocalSummary],
    population: &DMatrix<f64>,
    label: &str,
    failures: &mut Vec<String>,
) -> Result<Option<DpcaResult>, PsdError> {
    let k = cfg.k;
    let machine1 = || find_index(&summaries[0].spectral.vectors, &summaries[0].spectral.values, k);
    let index_set = match cfg.index_mode {
        IndexMode::Canonical => IndexSet::canonical(k),
        IndexMode::FindIndexMachine1 => machine1()?,
        IndexMode::FindIndexOracle => {
            let top = sym_eig_topk(population, k, Positivity::Require)?;
            find_index(&top.vectors, &top.values, k)?
        }
    };
    match lrc_dpca(summaries, k, &index_set) {
        Ok(r) => return Ok(Some(r)),
        Err(PsdError::MachinesNotInManifold { machines }) => {
            failures.push(format!("{label}: lrc_dpca on {index_set}: machines {machines:?} off manifold"));
        }
        Err(e) => return Err(e),
    }
    if cfg.index_mode != IndexMode::Canonical {
        return Ok(None);
    }
    let retry = machine1()?;
    match lrc_dpca(summaries, k, &retry) {
        Ok(r) => {
            failures.push(format!("{label}: recovered with index set {retry}"));
            Ok(Some(r))
        }
        Err(PsdError::MachinesNotInManifold { machines }) => {
            failures.push(format!("{label}: lrc_dpca on {retry}: machines {machines:?} off manifold, skipped"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Four distributed PCA methods on a spiked covariance. Sweep 0 varies `n`
/// at `M = m_fixed`; sweep 1 varies `M` at `n = n_fixed`. Errors are
/// projector distances to the true top-`K` eigenspace.
pub fn run_dpca(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let mut grid = Vec::new();
    for &p in &cfg.p_grid {
        for &n in &cfg.n_grid {
            grid.push(Point { sweep: 0, p, m: cfg.m_fixed, n, sigma_sq: 0.0, rep: 0 });
        }
        for &m in &cfg.m_grid {
            grid.push(Point { sweep: 1, p, m, n: cfg.n_fixed, sigma_sq: 0.0, rep: 0 });
        }
    }
    let tasks = with_reps(cfg, grid);
    execute(threads, &tasks, |pt| {
        let label = pt.label();
        let at = || RunError::at(label.clone());
        let spiked = spiked_covariance(pt.p, cfg.k, &mut signal_stream(cfg, pt.p, pt.rep).rng());
        let truth = spiked.true_subspace();
        let factor = covariance_factor(&spiked.sigma).map_err(at())?;
        let base = pt.sample_stream(cfg);
        let covs: Vec<DMatrix<f64>> = (0..pt.m)
            .map(|j| {
                let x = gaussian_data_with_factor(&factor, pt.n, &mut base.derive(&[j as u64]).rng());
                sample_cov(&x)
            })
            .collect();
        let (summaries, t_local) = timed(cfg.timing, || summarize(&covs, cfg.k));
        let summaries = summaries.map_err(at())?;

        let mut failures = Vec::new();
        let mut records = Vec::with_capacity(4);
        let mut push = |res: Result<DpcaResult, PsdError>, ms: f64| -> Result<(), RunError> {
            let r = res.map_err(at())?;
            let err = projector_distance(&r.v_est, &truth).map_err(at())?;
            records.push(pt.record(cfg, r.method.name(), err, ms));
            Ok(())
        };
        let (full, t) = timed(cfg.timing, || full_pca(&covs, cfg.k));
        push(full, t)?;
        let (lrc, t) = timed(cfg.timing, || {
            lrc_with_policy(cfg, &summaries, &spiked.sigma, &label, &mut failures)
        });
        if let Some(r) = lrc.map_err(at())? {
            push(Ok(r), t + t_local)?;
        }
        let (fan, t) = timed(cfg.timing, || dpca_fan(&summaries, cfg.k));
        push(fan, t + t_local)?;
        let (bw, t) = timed(cfg.timing, || dpca_bw(&summaries, cfg.k));
        push(bw, t + t_local)?;
        Ok(TaskOutput { records, failures })
    })
}

/// Karcher versus Euclidean averaging of extrinsic draws. Sweep 0 varies `M`
/// at `σ² = sigma_sq`; sweep 1 varies `σ²` at `M = m_fixed`.
pub fn run_extrinsic(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let mut grid = Vec::new();
    for &p in &cfg.p_grid {
        for &m in &cfg.m_grid {
            grid.push(Point { sweep: 0, p, m, n: cfg.n_inner, sigma_sq: cfg.sigma_sq, rep: 0 });
        }
        for &sigma_sq in &cfg.sigma_sq_grid {
            grid.push(Point { sweep: 1, p, m: cfg.m_fixed, n: cfg.n_inner, sigma_sq, rep: 0 });
        }
    }
    let tasks = with_reps(cfg, grid);
    execute(threads, &tasks, |pt| {
        let at = || RunError::at(pt.label());
        let a = gaussian_svd_signal(pt.p, cfg.k, &mut signal_stream(cfg, pt.p, pt.rep).rng())
            .map_err(at())?;
        let draws = extrinsic_sample(&a, pt.sigma_sq, pt.m, pt.n, &mut pt.sample_stream(cfg).rng())
            .map_err(at())?;
        let (lrc, t_lrc) = timed(cfg.timing, || karcher_mean(&draws));
        let (euc, t_euc) = timed(cfg.timing, || euclid_rankk_mean(&draws, cfg.k));
        Ok(TaskOutput {
            records: vec![
                pt.record(cfg, "lrc", frobenius_error(&lrc.map_err(at())?, &a), t_lrc),
                pt.record(cfg, "euclidean", frobenius_error(&euc.map_err(at())?, &a), t_euc),
            ],
            failures: Vec::new(),
        })
    })
}

/// Lower triangular `k x k` with diagonal in `[1, 2]` and `N(0, 1/4)` below.
pub fn random_lower(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let z = standard_normal_matrix(k, k, rng);
    DMatrix::from_fn(k, k, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Equal => 1.0 + rng.random::<f64>(),
        std::cmp::Ordering::Greater => 0.5 * z[(i, j)],
    })
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian with the signs of
/// `R`'s diagonal absorbed).
pub fn random_orthogonal(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let qr = standard_normal_matrix(k, k, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Gaussian matrix rescaled to max-norm 1, supported on the mock lower
/// triangular pattern of `index_set` when one is given.
pub fn unit_max_noise(
    rows: usize,
    cols: usize,
    index_set: Option<&IndexSet>,
    rng: &mut impl Rng,
) -> DMatrix<f64> {
    let e = match index_set {
        Some(idx) => mock_lower_noise(rows, idx, 1.0, rng),
        None => standard_normal_matrix(rows, cols, rng),
    };
    let scale = max_abs(&e);
    if scale > 0.0 {
        e / scale
    } else {
        e
    }
}

/// Random reduced Cholesky factor on a uniformly drawn index set: Gaussian
/// entries on the mock lower pattern, diagonal positions in `[1, 2]`.
pub fn random_mock_lower_factor(p: usize, k: usize, rng: &mut impl Rng) -> CholFactor {
    let mut rows = rand::seq::index::sample(rng, p, k).into_vec();
    rows.sort_unstable();
    let idx = IndexSet::new(rows, p).expect("sampled rows are distinct and in range");
    let mut n = mock_lower_noise(p, &idx, 0.5, rng);
    for (pos, &row) in idx.as_slice().iter().enumerate() {
        n[(row, pos)] = 1.0 + rng.random::<f64>();
    }
    CholFactor::new(n, idx).expect("positive diagonal on the mock lower pattern")
}

/// Max-norm remainders of the first-order LQ and Karcher-factor predictions
/// across the ε grid. Rows with method `predict_lq` use a `K x K` instance
/// (`p = K`); `predict_karcher` rows use `p x K` with `M = m_fixed` noise
/// matrices. The ε value is stored in the `sigma_sq` column.
pub fn run_perturb_order(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let p = cfg.p_grid[0];
    let k = cfg.k;
    let reps: Vec<usize> = (0..cfg.repetitions).collect();
    execute(threads, &reps, |&rep| {
        let mut records = Vec::new();

        let mut rng = root(cfg).derive(&[TAG_INSTANCE, 0, rep as u64]).rng();
        let r = random_lower(k, &mut rng);
        let q = random_orthogonal(k, &mut rng);
        let e = unit_max_noise(k, k, None, &mut rng);
        for &eps in &cfg.eps_grid {
            let pt = Point { sweep: 0, p: k, m: 1, n: 0, sigma_sq: eps, rep };
            let (rem, ms) = timed(cfg.timing, || lq_prediction_remainder(&r, &q, &(&e * eps)));
            records.push(pt.record(cfg, "predict_lq", rem.map_err(RunError::at(pt.label()))?, ms));
        }

        let mut rng = root(cfg).derive(&[TAG_INSTANCE, 1, rep as u64]).rng();
        let n = random_mock_lower_factor(p, k, &mut rng);
        let es: Vec<DMatrix<f64>> = (0..cfg.m_fixed)
            .map(|_| unit_max_noise(p, k, Some(n.index_set()), &mut rng))
            .collect();
        for &eps in &cfg.eps_grid {
            let pt = Point { sweep: 0, p, m: cfg.m_fixed, n: 0, sigma_sq: eps, rep };
            let scaled: Vec<DMatrix<f64>> = es.iter().map(|e| e * eps).collect();
            let (rem, ms) = timed(cfg.timing, || karcher_prediction_remainder(&n, &scaled));
            records.push(pt.record(cfg, "predict_karcher", rem.map_err(RunError::at(pt.label()))?, ms));
        }
        Ok(TaskOutput {
            records,
            failures: Vec::new(),
        })
    })
}
