//! Driving an experiment from code: shrink a preset, run it, print the
//! summary and the CSV.

use psdk::experiments::{report, run, write_csv, ExperimentConfig, ExperimentKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::quick(ExperimentKind::IntrinsicAvg);
    cfg.p_grid = vec![20];
    cfg.m_grid = vec![10, 40, 160];
    cfg.repetitions = 5;
    cfg.master_seed = 1;
    let out = run(&cfg, None)?;
    eprint!("{}", report(&cfg, &out));
    write_csv(&out.records, std::io::stdout().lock())?;
    Ok(())
}
