//! Run configuration, its content hash, and per-stage seed derivation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::DISTRIBUTION_LEVEL;
use crate::histogram::{DEFAULT_K, DEFAULT_LAPLACE_EPSILON};
use crate::learners::dropout::DEFAULT_PASSES;
use crate::learners::TrainConfig;

pub const DEFAULT_MULTIPLIERS: [f64; 5] = [0.0, 1.0, 10.0, 50.0, 100.0];

/// Default ADD / ADD-S AUC threshold in meters.
pub const DEFAULT_AUC_ADD_MAX: f64 = 0.10;

/// Default angular AUC threshold in degrees.
pub const DEFAULT_AUC_ANGLE_MAX_DEG: f64 = 180.0;

pub const MAX_GRID_LEVEL: u32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid_level: u32,
    pub k: usize,
    pub seed: u64,
    pub train: TrainConfig,
    /// Output gain of the Bingham head.
    pub head_gain: f64,
    pub tune_trials: usize,
    pub mc_passes: usize,
    pub laplace_epsilon: f64,
    pub multipliers: Vec<f64>,
    pub auc_add_max: f64,
    pub auc_angle_max_deg: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid_level: DISTRIBUTION_LEVEL,
            k: DEFAULT_K,
            seed: 0,
            train: TrainConfig::default(),
            head_gain: crate::learners::bingham_head::DEFAULT_OUTPUT_GAIN,
            tune_trials: 32,
            mc_passes: DEFAULT_PASSES,
            laplace_epsilon: DEFAULT_LAPLACE_EPSILON,
            multipliers: DEFAULT_MULTIPLIERS.to_vec(),
            auc_add_max: DEFAULT_AUC_ADD_MAX,
            auc_angle_max_deg: DEFAULT_AUC_ANGLE_MAX_DEG,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.grid_level > MAX_GRID_LEVEL {
            return bad(format!("grid level must be <= {MAX_GRID_LEVEL}, got {}", self.grid_level));
        }
        if self.k == 0 || self.k > 16 {
            return bad(format!("k must be in 1..=16, got {}", self.k));
        }
        self.train.validate()?;
        if !(self.head_gain > 0.0 && self.head_gain.is_finite()) {
            return bad(format!("head gain must be > 0, got {}", self.head_gain));
        }
        if self.tune_trials < 2 {
            return bad("tune trials must be >= 2".into());
        }
        if self.mc_passes < 5 {
            return bad("mc passes must be >= 5".into());
        }
        if !(self.laplace_epsilon > 0.0 && self.laplace_epsilon.is_finite()) {
            return bad(format!("laplace epsilon must be > 0, got {}", self.laplace_epsilon));
        }
        if self.multipliers.is_empty() || self.multipliers.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return bad(format!("multipliers must be finite and >= 0, got {:?}", self.multipliers));
        }
        if !(self.auc_add_max > 0.0 && self.auc_angle_max_deg > 0.0) {
            return bad("AUC thresholds must be > 0".into());
        }
        Ok(())
    }

    /// Canonical JSON (struct field order, shortest round-trip floats).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }
}

/// Seed for a named stage, derived from the top-level seed.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
