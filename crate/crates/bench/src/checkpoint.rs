//! Trained-model files (JSON).

use std::path::Path;

use cfo_core::systems::{SystemTag, TrajectorySet};
use cfo_core::{SplineKind, TrainConfig, VectorField};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Time-dependent vector field integrated by an ODE solver.
    Cfo,
    /// One-step map rolled out recursively.
    Ar,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Cfo => "cfo",
            ModelKind::Ar => "ar",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub system: SystemTag,
    pub state_dim: usize,
    pub raw_horizon: f64,
    pub keep_rate: f64,
    pub train: TrainConfig,
    pub best_step: usize,
    pub best_eval: Option<f64>,
    pub fingerprint: String,
    pub model: VectorField,
}

impl Checkpoint {
    /// Label such as `quintic` / `linear` / `ar` used in file names and CSVs.
    pub fn label(&self) -> String {
        match self.kind {
            ModelKind::Cfo => self.train.spline_kind.to_string(),
            ModelKind::Ar => "ar".into(),
        }
    }

    pub fn check_compatible(&self, data: &TrajectorySet) -> Result<()> {
        if data.state_dim != self.state_dim {
            return Err(BenchError::Config(format!(
                "checkpoint expects state dimension {}, dataset has {}",
                self.state_dim, data.state_dim
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
        }
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| BenchError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let ck: Self = serde_json::from_str(&text).map_err(|e| BenchError::format(path, e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(BenchError::format(path, format!("unsupported checkpoint version {}", ck.format_version)));
        }
        // re-validate shapes and normalizer
        VectorField::new(ck.model.config.clone(), ck.model.params.clone(), ck.model.normalizer.clone())
            .map_err(|e| BenchError::format(path, e.to_string()))?;
        Ok(ck)
    }
}

/// File stem for a trained model, e.g. `cfo_quintic_keep0.25_seed1`.
pub fn run_name(kind: ModelKind, spline: SplineKind, keep_rate: f64, seed: u64) -> String {
    match kind {
        ModelKind::Cfo => format!("cfo_{spline}_keep{keep_rate}_seed{seed}"),
        ModelKind::Ar => format!("ar_keep{keep_rate}_seed{seed}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cfo_core::MlpConfig;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = VectorField::initialized(
            MlpConfig {
                state_dim: 2,
                hidden_dims: vec![4],
                embed_bands: 1,
                use_time_embedding: true,
            },
            1,
        )
        .unwrap();
        let ck = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            kind: ModelKind::Cfo,
            system: SystemTag::Other,
            state_dim: 2,
            raw_horizon: 1.0,
            keep_rate: 0.5,
            train: TrainConfig::default(),
            best_step: 7,
            best_eval: Some(0.1),
            fingerprint: "abc".into(),
            model,
        };
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert_eq!(ck.label(), "quintic");
        assert_eq!(run_name(ModelKind::Ar, SplineKind::Quintic, 1.0, 3), "ar_keep1_seed3");
        assert_eq!(
            run_name(ModelKind::Cfo, SplineKind::Linear, 0.25, 0),
            "cfo_linear_keep0.25_seed0"
        );
    }
}
