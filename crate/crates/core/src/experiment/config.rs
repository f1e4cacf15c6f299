use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cmine::CmineConfig;
use crate::error::{Error, Result};
use crate::exact::ExactOptions;
use crate::lsbml::LsBmlConfig;
use crate::model::{DiscreteLogisticModel, SinusoidModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sinusoid,
    Logistic,
    Calibration,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Sinusoid => "sinusoid",
            ExperimentKind::Logistic => "logistic",
            ExperimentKind::Calibration => "calibration",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinusoid" => Ok(ExperimentKind::Sinusoid),
            "logistic" => Ok(ExperimentKind::Logistic),
            "calibration" => Ok(ExperimentKind::Calibration),
            _ => Err(Error::Config {
                path: "experiment".into(),
                message: format!("unknown experiment `{s}` (sinusoid, logistic, calibration)"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Exact,
    Lsbml,
    Cmine,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Exact => "exact",
            MethodKind::Lsbml => "lsbml",
            MethodKind::Cmine => "cmine",
        }
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MethodKind::Exact),
            "lsbml" => Ok(MethodKind::Lsbml),
            "cmine" => Ok(MethodKind::Cmine),
            _ => Err(Error::Config {
                path: "methods".into(),
                message: format!("unknown method `{s}` (exact, lsbml, cmine)"),
            }),
        }
    }
}

/// Gaussian-pair calibration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub rhos: Vec<f64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { rhos: vec![0.8, 0.0] }
    }
}

/// One sweep: an experiment, its model, the `(N, m)` grid and the methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    pub m: usize,
    pub methods: Vec<MethodKind>,
    pub replicates: usize,
    pub seed: u64,
    pub output_path: PathBuf,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    /// Fill `wall_ms` with measured times (the file is then no longer
    /// reproducible byte for byte).
    pub record_wall_time: bool,
    pub sinusoid: SinusoidModel,
    pub logistic: DiscreteLogisticModel,
    pub calibration: CalibrationConfig,
    pub budgets: ExactOptions,
    pub lsbml: LsBmlConfig,
    pub cmine: CmineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Sinusoid,
            n_grid: vec![1, 2, 4, 8, 16],
            m: 2,
            methods: vec![MethodKind::Exact],
            replicates: 3,
            seed: 0,
            output_path: PathBuf::from("results.csv"),
            workers: 0,
            record_wall_time: false,
            sinusoid: SinusoidModel::default(),
            logistic: DiscreteLogisticModel::default(),
            calibration: CalibrationConfig::default(),
            budgets: ExactOptions::default(),
            lsbml: LsBmlConfig::default(),
            cmine: CmineConfig::default(),
        }
    }
}

fn config_err(path: &str, e: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.into(),
        message: e.to_string(),
    }
}

impl ExperimentConfig {
    /// Parses TOML; unknown keys are rejected with their key path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_err("<root>", e))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner().message())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("<root>", e))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |path: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::Argument(msg) => config_err(path, msg),
                other => other,
            })
        };
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(config_err("N_grid", "must be non-empty with entries ≥ 1"));
        }
        if self.m == 0 {
            return Err(config_err("m", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("methods", "must name at least one method"));
        }
        if self.replicates == 0 {
            return Err(config_err("replicates", "must be at least 1"));
        }
        if self.calibration.rhos.iter().any(|r| !(r.abs() < 1.0)) {
            return Err(config_err("calibration.rhos", "correlations must lie in (-1, 1)"));
        }
        wrap("sinusoid", self.sinusoid.validate())?;
        wrap("logistic", self.logistic.validate())?;
        wrap("budgets", self.budgets.validate())?;
        wrap("lsbml", self.lsbml.validate())?;
        wrap("cmine", self.cmine.validate())
    }

    /// Worker count after resolving 0 to the available parallelism.
    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }
}

/// Command-line overrides; `None` keeps the config value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub methods: Option<Vec<MethodKind>>,
    pub n_grid: Option<Vec<usize>>,
    pub m: Option<usize>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub output_path: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        if let Some(v) = self.experiment {
            config.experiment = v;
        }
        if let Some(v) = &self.methods {
            config.methods = v.clone();
        }
        if let Some(v) = &self.n_grid {
            config.n_grid = v.clone();
        }
        if let Some(v) = self.m {
            config.m = v;
        }
        if let Some(v) = self.replicates {
            config.replicates = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = &self.output_path {
            config.output_path = v.clone();
        }
        if let Some(v) = self.workers {
            config.workers = v;
        }
        config.validate()
    }
}
