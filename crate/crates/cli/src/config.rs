//! Experiment configuration read from TOML, with command-line overrides.

use std::path::{Path, PathBuf};

use rflow_core::derivative::PicardOptions;
use rflow_core::example2d::{Region, ScanConfig};
use rflow_core::{DriftSpec, SquareMatrix, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Picard,
    Product,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftConfig {
    /// `a ≡ 0`
    Zero,
    /// `a(x) = A x` with `A = [[1, 1], [1, 1]]`
    Example,
    /// `a(x) = A x` with the given rows
    Linear { matrix: Vec<Vec<f64>> },
}

impl DriftConfig {
    pub fn build(&self, dim: usize) -> Result<DriftSpec> {
        let spec = match self {
            Self::Zero => DriftSpec::zero(dim),
            Self::Example => DriftSpec::symmetric_example(),
            Self::Linear { matrix } => DriftSpec::Linear(SquareMatrix::from_rows(matrix)?),
        };
        if spec.dim() != dim {
            return Err(CliError::Config(format!(
                "drift has dimension {} but the experiment has dimension {dim}",
                spec.dim()
            )));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeConfig {
    #[serde(default = "default_method")]
    pub method: MethodChoice,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Extra minimum excursion lengths for the product tail-bound sweep.
    #[serde(default)]
    pub min_lengths: Vec<f64>,
}

fn default_method() -> MethodChoice {
    MethodChoice::Both
}

fn default_tol() -> f64 {
    PicardOptions::default().tol
}

fn default_max_iter() -> usize {
    PicardOptions::default().max_iter
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            min_lengths: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub x1_lo: f64,
    pub x1_hi: f64,
    pub n_points: usize,
    pub x2: f64,
    /// Scan time; defaults to the horizon.
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default = "default_subintervals")]
    pub n_subintervals: usize,
}

fn default_subintervals() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub seeds: Vec<u64>,
    /// Worker threads; 0 means one per available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub drift: DriftConfig,
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    #[serde(default)]
    pub derivative: DerivativeConfig,
    #[serde(default)]
    pub scan: Option<ScanSection>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Values given on the command line; each replaces the file value when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub method: Option<MethodChoice>,
    pub workers: Option<usize>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(dt) = o.dt {
            self.dt = dt;
        }
        if let Some(t) = o.t_end {
            self.t_end = t;
        }
        if let Some(m) = o.method {
            self.derivative.method = m;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        self
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::with_step(self.t_end, self.dt)?)
    }

    /// Checks every field that a command may touch; nothing is written before this passes.
    pub fn validate(&self) -> Result<()> {
        if !(1..=rflow_core::matrix::MAX_DIM).contains(&self.dimension) {
            return Err(CliError::Config(format!(
                "dimension must be in 1..={}, got {}",
                rflow_core::matrix::MAX_DIM,
                self.dimension
            )));
        }
        positive("T", self.t_end)?;
        positive("dt", self.dt)?;
        self.grid()?;
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        self.drift.build(self.dimension)?;
        for x in &self.starts {
            if x.len() != self.dimension {
                return Err(CliError::Config(format!(
                    "start {x:?} does not have dimension {}",
                    self.dimension
                )));
            }
            if x.iter().any(|v| !v.is_finite()) || !(x[self.dimension - 1] >= 0.0) {
                return Err(CliError::Config(format!(
                    "start {x:?} lies outside the half-space"
                )));
            }
        }
        positive("derivative.tol", self.derivative.tol)?;
        if self.derivative.max_iter == 0 {
            return Err(CliError::Config(
                "derivative.max_iter must be at least 1".into(),
            ));
        }
        for &m in &self.derivative.min_lengths {
            if !(m.is_finite() && m >= 0.0) {
                return Err(CliError::Config(format!(
                    "min_length {m} must be non-negative"
                )));
            }
        }
        if let Some(scan) = &self.scan {
            if self.dimension != 2 || self.drift != DriftConfig::Example {
                return Err(CliError::Config(
                    "scans need dimension = 2 and the example drift".into(),
                ));
            }
            if scan.n_subintervals == 0 {
                return Err(CliError::Config(
                    "scan.n_subintervals must be at least 1".into(),
                ));
            }
            for seed in &self.seeds {
                self.scan_config(scan, *seed).validate()?;
            }
        }
        Ok(())
    }

    pub fn scan_config(&self, scan: &ScanSection, seed: u64) -> ScanConfig {
        ScanConfig {
            x1_lo: scan.x1_lo,
            x1_hi: scan.x1_hi,
            n_points: scan.n_points,
            x2: scan.x2,
            t: scan.t.unwrap_or(self.t_end),
            dt: self.dt,
            seed,
        }
    }

    pub fn region(&self, scan: &ScanSection) -> Region {
        Region {
            x1_lo: scan.x1_lo,
            x1_hi: scan.x1_hi,
            x2: scan.x2,
            n_points: scan.n_points,
            n_subintervals: scan.n_subintervals,
        }
    }

    pub fn picard_options(&self) -> PicardOptions {
        PicardOptions {
            tol: self.derivative.tol,
            max_iter: self.derivative.max_iter,
        }
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
    }
}
