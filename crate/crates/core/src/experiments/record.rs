use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{PsdError, Result};

/// Exact CSV header.
pub const CSV_HEADER: [&str; 11] = [
    "experiment",
    "method",
    "p",
    "K",
    "M",
    "n",
    "sigma_sq",
    "repetition",
    "seed",
    "error",
    "wall_time_ms",
];

/// One row of output: a method evaluated at one grid point and repetition.
///
/// For the perturbation-order experiment `sigma_sq` holds the noise scale ε.
/// `sweep` distinguishes the two sweeps of an experiment and is not written
/// to the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub experiment: &'static str,
    pub sweep: usize,
    pub method: &'static str,
    pub p: usize,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub sigma_sq: f64,
    pub repetition: usize,
    pub seed: u64,
    pub error: f64,
    pub wall_time_ms: f64,
}

/// Floats with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.experiment.to_string(),
            r.method.to_string(),
            r.p.to_string(),
            r.k.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            format_float(r.sigma_sq),
            r.repetition.to_string(),
            r.seed.to_string(),
            format_float(r.error),
            format_float(r.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(PsdError::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(PsdError::ShapeMismatch(
            "log-log fit needs positive coordinates".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(PsdError::InsufficientPoints {
            needed: 2,
            got: 1,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Grid point identity used to aggregate over repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridKey {
    pub sweep: usize,
    pub method: &'static str,
    pub p: usize,
    pub m: usize,
    pub n: usize,
    pub sigma_sq_bits: u64,
}

impl GridKey {
    pub fn of(r: &RunRecord) -> Self {
        Self {
            sweep: r.sweep,
            method: r.method,
            p: r.p,
            m: r.m,
            n: r.n,
            sigma_sq_bits: r.sigma_sq.to_bits(),
        }
    }

    pub fn sigma_sq(&self) -> f64 {
        f64::from_bits(self.sigma_sq_bits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub key: GridKey,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

/// Mean and median error over repetitions for every grid point.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<GridKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(GridKey::of(r)).or_default().push(r.error);
    }
    groups
        .into_iter()
        .map(|(key, errs)| Aggregate {
            key,
            count: errs.len(),
            mean: mean(&errs),
            median: median(&errs),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_powers() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, x * x)).collect();
        let fit = slope_fit(&pts).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-9);
        assert!(fit.intercept.abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let pts: Vec<(f64, f64)> = [30.0_f64, 60.0, 90.0].iter().map(|&x| (x, 3.0 / x.sqrt())).collect();
        assert!((slope_fit(&pts).unwrap().slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn insufficient_points() {
        assert!(matches!(
            slope_fit(&[(1.0, 1.0)]),
            Err(PsdError::InsufficientPoints { .. })
        ));
        assert!(slope_fit(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(slope_fit(&[(1.0, 0.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = RunRecord {
            experiment: "dpca",
            sweep: 0,
            method: "lrc_dpca",
            p: 50,
            k: 5,
            m: 20,
            n: 1000,
            sigma_sq: 0.0,
            repetition: 3,
            seed: 7,
            error: 0.125,
            wall_time_ms: 0.0,
        };
        let mut buf = Vec::new();
        write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "experiment,method,p,K,M,n,sigma_sq,repetition,seed,error,wall_time_ms\n\
             dpca,lrc_dpca,50,5,20,1000,0.0000000000000000e0,3,7,1.2500000000000000e-1,0.0000000000000000e0\n"
        );
    }

    #[test]
    fn float_round_trip() {
        for x in [0.1_f64, 1.0 / 3.0, 2.0_f64.sqrt() * 1e-7, 123456.789] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn aggregation() {
        let mk = |rep, error| RunRecord {
            experiment: "x",
            sweep: 0,
            method: "m",
            p: 1,
            k: 1,
            m: 1,
            n: 1,
            sigma_sq: 0.5,
            repetition: rep,
            seed: 0,
            error,
            wall_time_ms: 0.0,
        };
        let agg = aggregate(&[mk(0, 1.0), mk(1, 2.0), mk(2, 6.0)]);
        assert_eq!(agg.len(), 1);
        assert_eq!((agg[0].count, agg[0].mean, agg[0].median), (3, 3.0, 2.0));
        assert_eq!(agg[0].key.sigma_sq(), 0.5);
    }
}
