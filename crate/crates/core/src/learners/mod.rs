//! Networks and training procedures for orientation distributions.

pub mod adam;
pub mod bingham_head;
pub mod checkpoint;
pub mod comparison;
pub mod cosine;
pub mod direct;
pub mod dropout;
pub mod fit;
pub mod mlp;
pub mod tune;

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::features::{reference_features, FEATURE_DIM};
use crate::data::Record;
use crate::error::{Error, Result};
use crate::grid::S3Grid;
use crate::symmetry::SymmetrySpec;

/// Hyperparameters shared by the trained methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    /// Input dropout on the first two layers.
    pub dropout: f64,
    /// Records per optimizer step (the comparison scorer always uses 1,
    /// since one record already yields a full grid of scores).
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![256, 256],
            epochs: 10,
            lr: 1e-3,
            dropout: 0.0,
            batch_size: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(format!("invalid training configuration {self:?}")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// Widths from `input` through the hidden layers to `output`.
    pub fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(&self.hidden);
        w.push(output);
        w
    }

    /// Dropout on the input and first hidden layer.
    pub fn dropout_rates(&self) -> Vec<f64> {
        vec![self.dropout; 2]
    }
}

/// Per-object reference features, one row per grid vertex.
#[derive(Clone, Debug)]
pub struct ReferenceTables {
    tables: BTreeMap<String, Array2<f64>>,
}

impl ReferenceTables {
    pub fn build(grid: &S3Grid, objects: &BTreeMap<String, SymmetrySpec>) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for (id, sym) in objects {
            let mut t = Array2::zeros((grid.len(), FEATURE_DIM));
            for (j, v) in grid.vertices().iter().enumerate() {
                let f = reference_features(v, sym)?;
                for (c, x) in f.iter().enumerate() {
                    t[(j, c)] = *x;
                }
            }
            tables.insert(id.clone(), t);
        }
        Ok(ReferenceTables { tables })
    }

    pub fn get(&self, object: &str) -> Result<&Array2<f64>> {
        self.tables
            .get(object)
            .ok_or_else(|| Error::InvalidInput(format!("no reference features for object `{object}`")))
    }
}

pub(crate) fn check_feature(record: &Record, dim: usize) -> Result<()> {
    if record.feature.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: record.feature.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_nonempty(records: &[Record]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    Ok(())
}

/// Fisher–Yates order for one epoch.
pub(crate) fn epoch_order<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}
