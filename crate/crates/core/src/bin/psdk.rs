use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use psdk::experiments::{
    report, run, selftest, write_csv, ConfigFile, ExperimentConfig, ExperimentKind, RunError,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    IntrinsicAvg,
    Dpca,
    ExtrinsicAvg,
    PerturbOrder,
    Selftest,
}

/// Simulation experiments for low-rank PSD averaging and distributed PCA.
#[derive(Debug, Parser)]
#[command(name = "psdk", version)]
struct Cli {
    #[arg(value_enum)]
    experiment: Command,
    /// TOML file with ExperimentConfig keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// p = 50 and 20 repetitions.
    #[arg(long)]
    quick: bool,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Fill wall_time_ms (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

fn kind(c: Command) -> Option<ExperimentKind> {
    match c {
        Command::IntrinsicAvg => Some(ExperimentKind::IntrinsicAvg),
        Command::Dpca => Some(ExperimentKind::Dpca),
        Command::ExtrinsicAvg => Some(ExperimentKind::ExtrinsicAvg),
        Command::PerturbOrder => Some(ExperimentKind::PerturbOrder),
        Command::Selftest => None,
    }
}

fn build_config(cli: &Cli, kind: ExperimentKind) -> Result<ExperimentConfig, RunError> {
    let mut cfg = if cli.quick {
        ExperimentConfig::quick(kind)
    } else {
        ExperimentConfig::defaults(kind)
    };
    if let Some(path) = &cli.config {
        cfg.apply(ConfigFile::load(path)?)?;
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_path = Some(out.clone());
    }
    cfg.timing |= cli.timing;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    let Some(kind) = kind(cli.experiment) else {
        let checks = selftest(cli.seed.unwrap_or(0));
        let mut ok = true;
        for c in &checks {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            ok &= c.passed;
        }
        return if ok { ExitCode::SUCCESS } else { ExitCode::from(2) };
    };
    let cfg = match build_config(&cli, kind) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let output = match run(&cfg, cli.threads) {
        Ok(o) => o,
        Err(e @ RunError::Config(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    eprint!("{}", report(&cfg, &output));
    let written = match &cfg.output_path {
        Some(path) => File::create(path).and_then(|f| write_csv(&output.records, BufWriter::new(f))),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_csv(&output.records, &mut lock).and_then(|_| lock.flush())
        }
    };
    if let Err(e) = written {
        eprintln!("error: writing CSV: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
