//! Seeded reproductions of the simulation studies: intrinsic averaging,
//! distributed PCA, extrinsic averaging, and the perturbation-order checks.
//!
//! Every (grid point, repetition) pair is an independent task with its own
//! [`RngStream`](crate::models::RngStream). Tasks run on a rayon pool and the
//! records are reassembled in task order, so output does not depend on the
//! thread count.

mod config;
mod record;
mod runners;
mod selftest;

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::error::PsdError;

pub use config::{ConfigFile, ExperimentConfig, ExperimentKind, IndexMode};
pub use record::{
    aggregate, format_float, mean, median, slope_fit, write_csv, Aggregate, GridKey, RunRecord,
    SlopeFit, CSV_HEADER,
};
pub use runners::{
    random_lower, random_mock_lower_factor, random_orthogonal, unit_max_noise, run_dpca,
    run_extrinsic, run_intrinsic, run_perturb_order,
};
pub use selftest::{selftest, SelftestCheck};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure at {grid_point}: {source}")]
    Numerical { grid_point: String, source: PsdError },
}

impl RunError {
    pub(crate) fn at(grid_point: impl Into<String>) -> impl FnOnce(PsdError) -> RunError {
        let grid_point = grid_point.into();
        move |source| RunError::Numerical { grid_point, source }
    }
}

/// Records in deterministic order plus the failures that were logged and
/// skipped (or recovered from) instead of aborting the run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub failures: Vec<String>,
}

#[derive(Debug, Default)]
pub(crate) struct TaskOutput {
    pub records: Vec<RunRecord>,
    pub failures: Vec<String>,
}

/// Runs `f` on every task, in parallel, and concatenates the outputs in task
/// order. The first failing task (in task order) decides the error.
pub(crate) fn execute<T, F>(threads: Option<usize>, tasks: &[T], f: F) -> Result<RunOutput, RunError>
where
    T: Sync,
    F: Fn(&T) -> Result<TaskOutput, RunError> + Sync + Send,
{
    let work = || tasks.par_iter().map(&f).collect::<Vec<_>>();
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut out = RunOutput::default();
    for r in results {
        let t = r?;
        out.records.extend(t.records);
        out.failures.extend(t.failures);
    }
    Ok(out)
}

/// Runs the experiment selected by `cfg.experiment`.
pub fn run(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::IntrinsicAvg => run_intrinsic(cfg, threads),
        ExperimentKind::Dpca => run_dpca(cfg, threads),
        ExperimentKind::ExtrinsicAvg => run_extrinsic(cfg, threads),
        ExperimentKind::PerturbOrder => run_perturb_order(cfg, threads),
    }
}

/// Mean error per method along one sweep, as `(x, mean)` points.
pub fn sweep_curve(
    records: &[RunRecord],
    sweep: usize,
    method: &str,
    x_of: impl Fn(&GridKey) -> f64,
) -> Vec<(f64, f64)> {
    aggregate(records)
        .into_iter()
        .filter(|a| a.key.sweep == sweep && a.key.method == method)
        .map(|a| (x_of(&a.key), a.mean))
        .collect()
}

fn methods_in(records: &[RunRecord]) -> Vec<&'static str> {
    let mut seen: Vec<&'static str> = Vec::new();
    for r in records {
        if !seen.contains(&r.method) {
            seen.push(r.method);
        }
    }
    seen
}

/// Human-readable table of mean and median errors, with log-log slopes along
/// each sweep.
pub fn report(cfg: &ExperimentConfig, out: &RunOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} (seed {})", cfg.experiment.name(), cfg.master_seed);
    let _ = writeln!(s, "sweep method p M n sigma_sq reps mean median");
    for a in aggregate(&out.records) {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {:.4e} {:.4e}",
            a.key.sweep,
            a.key.method,
            a.key.p,
            a.key.m,
            a.key.n,
            a.key.sigma_sq(),
            a.count,
            a.mean,
            a.median
        );
    }
    let methods = methods_in(&out.records);
    let mut slope_line = |label: &str, sweep: usize, x_of: &dyn Fn(&GridKey) -> f64, p: Option<usize>| {
        for &m in &methods {
            let pts: Vec<(f64, f64)> = aggregate(&out.records)
                .into_iter()
                .filter(|a| a.key.sweep == sweep && a.key.method == m)
                .filter(|a| p.is_none_or(|p| a.key.p == p))
                .map(|a| (x_of(&a.key), a.mean))
                .collect();
            if let Ok(fit) = slope_fit(&pts) {
                let _ = writeln!(
                    s,
                    "slope {label} {m}: {:.3} (r2 {:.3})",
                    fit.slope, fit.r_squared
                );
            }
        }
    };
    match cfg.experiment {
        ExperimentKind::IntrinsicAvg => {
            for &p in &cfg.p_grid {
                slope_line(&format!("vs M (p={p})"), 0, &|k| k.m as f64, Some(p));
            }
        }
        ExperimentKind::Dpca => {
            slope_line("vs n", 0, &|k| k.n as f64, None);
            slope_line("vs M", 1, &|k| k.m as f64, None);
        }
        ExperimentKind::ExtrinsicAvg => {
            slope_line("vs M", 0, &|k| k.m as f64, None);
        }
        ExperimentKind::PerturbOrder => {
            slope_line("vs eps", 0, &|k| k.sigma_sq(), None);
        }
    }
    for f in &out.failures {
        let _ = writeln!(s, "logged failure: {f}");
    }
    s
}
