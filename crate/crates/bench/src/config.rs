//! Experiment configuration: a TOML file whose every key can be overridden
//! from the command line, plus the provenance fingerprint.

use std::path::{Path, PathBuf};

use cfo_core::odeint::{Method, SolverConfig};
use cfo_core::systems::{BurgersConfig, SystemTag};
use cfo_core::{MlpConfig, SplineKind, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

/// Environment variable holding the root for relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "CFO_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_times: usize,
    /// Physical length of the time window in seconds.
    pub horizon: f64,
    /// Lorenz initial conditions are uniform in `[-init_box, init_box]^3`.
    pub init_box: f64,
    pub nu: f64,
    pub nx: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_val: 20,
            n_test: 100,
            n_times: 201,
            horizon: 5.0,
            init_box: 5.0,
            nu: 0.01,
            nx: 100,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dims: Vec<usize>,
    pub embed_bands: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = MlpConfig::desk(1);
        Self {
            hidden_dims: d.hidden_dims,
            embed_bands: d.embed_bands,
        }
    }
}

impl ModelConfig {
    pub fn mlp(&self, state_dim: usize) -> MlpConfig {
        MlpConfig {
            state_dim,
            hidden_dims: self.hidden_dims.clone(),
            embed_bands: self.embed_bands,
            use_time_embedding: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: Method,
    pub substeps: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            substeps: 1,
        }
    }
}

impl SolverSection {
    pub fn solver(&self) -> Result<SolverConfig> {
        Ok(SolverConfig::new(self.method, self.substeps)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemTag,
    pub keep_rate: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub solver: SolverSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemTag::Lorenz,
            keep_rate: 1.0,
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            solver: SolverSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale settings for `system`.
    pub fn preset(system: SystemTag) -> Self {
        let mut cfg = Self {
            system,
            ..Self::default()
        };
        if system == SystemTag::Burgers1d {
            cfg.data.n_train = 200;
            cfg.data.n_val = 10;
            cfg.data.n_test = 20;
            cfg.data.n_times = 101;
            cfg.data.horizon = 1.0;
        }
        cfg
    }

    /// Parses a TOML configuration. Keys missing from the file take the
    /// desk preset of the file's `system` (Lorenz when absent).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| BenchError::Config(e.to_string());
        let file: toml::Table = text.parse().map_err(|e| bad(&e))?;
        let system: SystemTag = match file.get("system") {
            Some(v) => v.clone().try_into().map_err(|e| bad(&e))?,
            None => SystemTag::Lorenz,
        };
        let mut merged = toml::Table::try_from(Self::preset(system)).map_err(|e| bad(&e))?;
        overlay(&mut merged, file);
        merged.try_into().map_err(|e| bad(&e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(BenchError::Config("seed list must be nonempty".into()));
        }
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return Err(BenchError::Config(format!("keep_rate must lie in (0, 1], got {}", self.keep_rate)));
        }
        if self.system == SystemTag::Other {
            return Err(BenchError::Config("system must be lorenz or burgers1d".into()));
        }
        let d = &self.data;
        if d.n_train == 0 || d.n_test == 0 || d.n_times < 3 {
            return Err(BenchError::Config("need training and test trajectories and at least 3 times".into()));
        }
        if !(d.horizon > 0.0) {
            return Err(BenchError::Config("horizon must be positive".into()));
        }
        if self.system == SystemTag::Burgers1d {
            self.burgers().validate()?;
        }
        self.train.validate()?;
        self.model.mlp(1).validate()?;
        self.solver.solver()?;
        Ok(())
    }

    pub fn burgers(&self) -> BurgersConfig {
        BurgersConfig {
            nu: self.data.nu,
            nx: self.data.nx,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.system {
            SystemTag::Burgers1d => self.data.nx,
            _ => 3,
        }
    }

    /// Output directory, resolved against [`OUTPUT_ROOT_ENV`] when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output(&self.output_dir, std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
    }

    /// Short hash of every setting, embedded in outputs for provenance.
    pub fn fingerprint(&self) -> String {
        fingerprint_of(self)
    }

    /// Training settings for one seed.
    pub fn train_for_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    pub fn spline_kind(&self) -> SplineKind {
        self.train.spline_kind
    }
}

/// Recursively replaces entries of `base` by those of `top`.
fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

pub fn resolve_output(dir: &Path, root: Option<PathBuf>) -> PathBuf {
    match root {
        Some(r) if dir.is_relative() => r.join(dir),
        _ => dir.to_path_buf(),
    }
}

/// First 16 hex digits of the SHA-256 of the value's JSON form.
pub fn fingerprint_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value serializes");
    let digest = Sha256::digest(&json);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
