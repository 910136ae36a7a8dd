use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use super::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[serde(alias = "intrinsic_avg")]
    IntrinsicAvg,
    Dpca,
    #[serde(alias = "extrinsic_avg")]
    ExtrinsicAvg,
    #[serde(alias = "perturb_order")]
    PerturbOrder,
}

impl ExperimentKind {
    /// Name written to the `experiment` CSV column.
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::IntrinsicAvg => "intrinsic_avg",
            ExperimentKind::Dpca => "dpca",
            ExperimentKind::ExtrinsicAvg => "extrinsic_avg",
            ExperimentKind::PerturbOrder => "perturb_order",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "intrinsic-avg" => Ok(Self::IntrinsicAvg),
            "dpca" => Ok(Self::Dpca),
            "extrinsic-avg" => Ok(Self::ExtrinsicAvg),
            "perturb-order" => Ok(Self::PerturbOrder),
            _ => Err(ConfigError::Invalid(format!("unknown experiment `{s}`"))),
        }
    }
}

/// How LRC-dPCA picks its cousin manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// Rows `[0..K)`; on failure retry with the machine-1 selection.
    Canonical,
    /// [`find_index`](crate::dpca::find_index) on the population eigenpairs.
    FindIndexOracle,
    /// [`find_index`](crate::dpca::find_index) on machine 1's eigenpairs.
    FindIndexMachine1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub p_grid: Vec<usize>,
    pub k: usize,
    /// Fixed noise level (intrinsic σ² for the averaging experiments).
    pub sigma_sq: f64,
    /// Second extrinsic sweep over σ² at `m_fixed` machines.
    pub sigma_sq_grid: Vec<f64>,
    pub m_grid: Vec<usize>,
    pub m_fixed: usize,
    pub n_grid: Vec<usize>,
    pub n_fixed: usize,
    pub n_inner: usize,
    /// Noise scales for the perturbation-order experiment.
    pub eps_grid: Vec<f64>,
    pub repetitions: usize,
    pub master_seed: u64,
    pub index_mode: IndexMode,
    pub output_path: Option<PathBuf>,
    /// Record wall-clock times; off by default so output is reproducible.
    pub timing: bool,
}

impl ExperimentConfig {
    /// Full-size grids.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let base = Self {
            experiment,
            p_grid: vec![100],
            k: 5,
            sigma_sq: 1.0,
            sigma_sq_grid: Vec::new(),
            m_grid: Vec::new(),
            m_fixed: 0,
            n_grid: Vec::new(),
            n_fixed: 0,
            n_inner: crate::models::EXTRINSIC_N_INNER,
            eps_grid: Vec::new(),
            repetitions: 20,
            master_seed: 0,
            index_mode: IndexMode::Canonical,
            output_path: None,
            timing: false,
        };
        match experiment {
            ExperimentKind::IntrinsicAvg => Self {
                p_grid: vec![100, 200, 300, 400],
                m_grid: (1..=9).map(|i| 30 * i).collect(),
                ..base
            },
            ExperimentKind::Dpca => Self {
                index_mode: IndexMode::FindIndexMachine1,
                m_fixed: 50,
                n_grid: (1..=5).map(|i| 500 * i).collect(),
                n_fixed: 1000,
                m_grid: vec![50, 100, 150, 200],
                repetitions: 100,
                ..base
            },
            ExperimentKind::ExtrinsicAvg => Self {
                sigma_sq: 0.5,
                m_grid: (1..=10).map(|i| 100 * i).collect(),
                m_fixed: 400,
                sigma_sq_grid: (0..=7).map(|i| i as f64 / 10.0).collect(),
                ..base
            },
            ExperimentKind::PerturbOrder => Self {
                p_grid: vec![20],
                k: 4,
                m_fixed: 5,
                eps_grid: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3],
                ..base
            },
        }
    }

    /// Desk-scale grids: `p = 50` and 20 repetitions.
    pub fn quick(experiment: ExperimentKind) -> Self {
        let mut cfg = Self::defaults(experiment);
        if experiment != ExperimentKind::PerturbOrder {
            cfg.p_grid = vec![50];
        }
        cfg.repetitions = 20;
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1".into());
        }
        if self.p_grid.is_empty() {
            return fail("p grid is empty".into());
        }
        if self.k == 0 || self.p_grid.iter().any(|&p| p < self.k) {
            return fail(format!("need p >= K >= 1 (K = {})", self.k));
        }
        if !(self.sigma_sq >= 0.0) || self.sigma_sq_grid.iter().any(|s| !(*s >= 0.0)) {
            return fail("noise variances must be nonnegative".into());
        }
        match self.experiment {
            ExperimentKind::IntrinsicAvg => {
                if self.m_grid.is_empty() || self.m_grid.contains(&0) {
                    return fail("M grid must be non-empty and positive".into());
                }
            }
            ExperimentKind::Dpca => {
                if self.n_grid.is_empty() || self.m_grid.is_empty() {
                    return fail("dpca needs non-empty n and M grids".into());
                }
                if self.n_grid.contains(&0)
                    || self.m_grid.contains(&0)
                    || self.m_fixed == 0
                    || self.n_fixed == 0
                {
                    return fail("machine counts and sample sizes must be positive".into());
                }
            }
            ExperimentKind::ExtrinsicAvg => {
                if self.m_grid.is_empty() || self.sigma_sq_grid.is_empty() {
                    return fail("extrinsic needs non-empty M and sigma_sq grids".into());
                }
                if self.m_grid.contains(&0) || self.m_fixed == 0 || self.n_inner == 0 {
                    return fail("machine counts and n_inner must be positive".into());
                }
            }
            ExperimentKind::PerturbOrder => {
                if self.eps_grid.len() < 4 {
                    return fail("perturbation order needs at least 4 noise scales".into());
                }
                if self.eps_grid.iter().any(|e| !(*e > 0.0)) {
                    return fail("noise scales must be positive".into());
                }
                if self.m_fixed == 0 {
                    return fail("m_fixed must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Overlays the keys present in a config file.
    pub fn apply(&mut self, file: ConfigFile) -> Result<(), ConfigError> {
        if let Some(e) = file.experiment {
            if e != self.experiment {
                return Err(ConfigError::Invalid(format!(
                    "config file is for `{}`, command is `{}`",
                    e.name(),
                    self.experiment.name()
                )));
            }
        }
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = file.$field { self.$field = v; } )* };
        }
        set!(
            p_grid,
            k,
            sigma_sq,
            sigma_sq_grid,
            m_grid,
            m_fixed,
            n_grid,
            n_fixed,
            n_inner,
            eps_grid,
            repetitions,
            master_seed,
            index_mode,
            timing
        );
        if let Some(p) = file.p {
            self.p_grid = vec![p];
        }
        if let Some(path) = file.output_path {
            self.output_path = Some(path);
        }
        Ok(())
    }
}

/// Flat key-value config file (TOML). Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<ExperimentKind>,
    pub p: Option<usize>,
    pub p_grid: Option<Vec<usize>>,
    #[serde(alias = "K")]
    pub k: Option<usize>,
    pub sigma_sq: Option<f64>,
    pub sigma_sq_grid: Option<Vec<f64>>,
    #[serde(alias = "M_grid")]
    pub m_grid: Option<Vec<usize>>,
    #[serde(alias = "M")]
    pub m_fixed: Option<usize>,
    pub n_grid: Option<Vec<usize>>,
    #[serde(alias = "n")]
    pub n_fixed: Option<usize>,
    pub n_inner: Option<usize>,
    pub eps_grid: Option<Vec<f64>>,
    pub repetitions: Option<usize>,
    #[serde(alias = "seed")]
    pub master_seed: Option<u64>,
    pub index_mode: Option<IndexMode>,
    pub output_path: Option<PathBuf>,
    pub timing: Option<bool>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_grids() {
        let c = ExperimentConfig::defaults(ExperimentKind::IntrinsicAvg);
        assert_eq!(c.p_grid, vec![100, 200, 300, 400]);
        assert_eq!(c.m_grid.first(), Some(&30));
        assert_eq!(c.m_grid.last(), Some(&270));
        assert_eq!((c.k, c.sigma_sq), (5, 1.0));

        let c = ExperimentConfig::defaults(ExperimentKind::Dpca);
        assert_eq!((c.m_fixed, c.n_fixed, c.repetitions), (50, 1000, 100));
        assert_eq!(c.n_grid, vec![500, 1000, 1500, 2000, 2500]);
        assert_eq!(c.m_grid, vec![50, 100, 150, 200]);
        assert_eq!(c.index_mode, IndexMode::FindIndexMachine1);

        let c = ExperimentConfig::defaults(ExperimentKind::ExtrinsicAvg);
        assert_eq!((c.p_grid[0], c.k, c.n_inner, c.m_fixed), (100, 5, 2000, 400));
        assert_eq!(c.sigma_sq_grid.len(), 8);
        assert!((c.sigma_sq_grid[7] - 0.7).abs() < 1e-15);

        let q = ExperimentConfig::quick(ExperimentKind::Dpca);
        assert_eq!((q.p_grid[0], q.repetitions), (50, 20));
        for kind in [
            ExperimentKind::IntrinsicAvg,
            ExperimentKind::Dpca,
            ExperimentKind::ExtrinsicAvg,
            ExperimentKind::PerturbOrder,
        ] {
            ExperimentConfig::defaults(kind).validate().unwrap();
            ExperimentConfig::quick(kind).validate().unwrap();
        }
    }

    #[test]
    fn file_overrides() {
        let f = ConfigFile::parse(
            "experiment = \"dpca\"\np = 30\nK = 3\nn_grid = [100, 200]\nseed = 9\nindex_mode = \"find_index_oracle\"\n",
        )
        .unwrap();
        let mut c = ExperimentConfig::defaults(ExperimentKind::Dpca);
        c.apply(f).unwrap();
        assert_eq!((c.p_grid.clone(), c.k, c.master_seed), (vec![30], 3, 9));
        assert_eq!(c.n_grid, vec![100, 200]);
        assert_eq!(c.index_mode, IndexMode::FindIndexOracle);

        let mut c = ExperimentConfig::defaults(ExperimentKind::IntrinsicAvg);
        assert!(c.apply(ConfigFile::parse("experiment = \"dpca\"").unwrap()).is_err());
        assert!(ConfigFile::parse("bogus = 1").is_err());
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::quick(ExperimentKind::IntrinsicAvg);
        c.repetitions = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::quick(ExperimentKind::PerturbOrder);
        c.eps_grid.truncate(3);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::quick(ExperimentKind::Dpca);
        c.k = 60;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("intrinsic-avg".parse::<ExperimentKind>().unwrap(), ExperimentKind::IntrinsicAvg);
        assert_eq!("perturb_order".parse::<ExperimentKind>().unwrap(), ExperimentKind::PerturbOrder);
        assert!("selftest".parse::<ExperimentKind>().is_err());
    }
}
