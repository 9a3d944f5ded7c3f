//! Checkpoint files: a fitted method plus the settings it was fitted with.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bingham_head::BinghamHead;
use super::comparison::ComparisonModel;
use super::direct::DirectModel;
use super::dropout::DropoutRegressor;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::quat::UnitQuaternion;

pub const CHECKPOINT_FORMAT: &str = "orientdist-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Method names accepted by `--method`.
pub const METHOD_NAMES: [&str; 9] = [
    "uniform",
    "fixed-bingham",
    "mixture",
    "mc-dropout",
    "confusion",
    "bingham-head",
    "comparison",
    "cosine",
    "direct-histogram",
];

/// Fitted state of a method. Methods without state (uniform, cosine) need
/// no checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "state", rename_all = "kebab-case")]
pub enum FittedModel {
    /// Tuned concentration per object.
    FixedBingham { lambdas: BTreeMap<String, f64> },
    Mixture { lambdas: BTreeMap<String, f64> },
    /// `(estimate, truth)` training pairs per object; the matrix is rebuilt
    /// on load since it is far larger than the pairs.
    Confusion {
        epsilon: f64,
        pairs: BTreeMap<String, Vec<(UnitQuaternion, UnitQuaternion)>>,
    },
    McDropout { regressor: DropoutRegressor, passes: usize },
    BinghamHead(BinghamHead),
    Comparison(ComparisonModel),
    DirectHistogram(DirectModel),
}

impl FittedModel {
    pub fn method(&self) -> &'static str {
        match self {
            FittedModel::FixedBingham { .. } => "fixed-bingham",
            FittedModel::Mixture { .. } => "mixture",
            FittedModel::Confusion { .. } => "confusion",
            FittedModel::McDropout { .. } => "mc-dropout",
            FittedModel::BinghamHead(_) => "bingham-head",
            FittedModel::Comparison(_) => "comparison",
            FittedModel::DirectHistogram(_) => "direct-histogram",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub grid_level: u32,
    pub k: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    pub model: FittedModel,
}

impl Checkpoint {
    pub fn new(grid_level: u32, k: usize, seed: u64, train: Option<TrainConfig>, model: FittedModel) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            grid_level,
            k,
            seed,
            train,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::MissingCheckpoint(format!("{}: {e}", path.display())))?;
        let c: Checkpoint = serde_json::from_str(&text)?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported checkpoint format {} v{}",
                c.format, c.version
            )));
        }
        Ok(c)
    }

    /// Errors unless the checkpoint was made for `grid_level`.
    pub fn check_grid(&self, grid_level: u32) -> Result<()> {
        if self.grid_level != grid_level {
            return Err(Error::GridMismatch {
                checkpoint: self.grid_level,
                config: grid_level,
            });
        }
        Ok(())
    }
}
