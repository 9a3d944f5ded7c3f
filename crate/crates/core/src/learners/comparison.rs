//! Learned comparison histogram: a network scores the query feature against
//! the cached reference feature of every grid vertex, and the scores are the
//! histogram values.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, MlpAdam};
use super::mlp::{Activation, Mlp, MlpSpec};
use super::{check_feature, check_nonempty, epoch_order, ReferenceTables, TrainConfig};
use crate::data::features::FEATURE_DIM;
use crate::data::Record;
use crate::error::{Error, Result};
use crate::grid::S3Grid;
use crate::histogram::{nll_loss_with, GriddedHistogram, KnnWeights};
use crate::symmetry::SymmetrySpec;

/// Added to every sigmoid score so a histogram never has zero total mass.
pub const SCORE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonModel {
    pub net: Mlp,
    pub grid_level: u32,
    pub k: usize,
    pub feature_dim: usize,
    pub objects: BTreeMap<String, SymmetrySpec>,
}

impl ComparisonModel {
    pub fn new<R: Rng + ?Sized>(
        cfg: &TrainConfig,
        grid_level: u32,
        k: usize,
        objects: BTreeMap<String, SymmetrySpec>,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let spec = MlpSpec {
            widths: cfg.widths(2 * FEATURE_DIM, 1),
            hidden: Activation::Relu,
            output: Activation::Sigmoid,
            dropout: cfg.dropout_rates(),
        };
        Ok(ComparisonModel {
            net: Mlp::new(&spec, rng)?,
            grid_level,
            k,
            feature_dim: FEATURE_DIM,
            objects,
        })
    }
}

/// A model bound to its grid and reference tables.
#[derive(Clone, Debug)]
pub struct ComparisonScorer {
    model: ComparisonModel,
    grid: Arc<S3Grid>,
    refs: ReferenceTables,
}

impl ComparisonScorer {
    pub fn new(model: ComparisonModel, grid: Arc<S3Grid>) -> Result<Self> {
        if model.grid_level != grid.level() {
            return Err(Error::GridMismatch {
                checkpoint: model.grid_level,
                config: grid.level(),
            });
        }
        let refs = ReferenceTables::build(&grid, &model.objects)?;
        Ok(ComparisonScorer { model, grid, refs })
    }

    pub fn model(&self) -> &ComparisonModel {
        &self.model
    }

    pub fn into_model(self) -> ComparisonModel {
        self.model
    }

    pub fn grid(&self) -> &Arc<S3Grid> {
        &self.grid
    }

    /// `N × 2d` input rows `[φ, φⱼ]`.
    fn inputs(&self, record: &Record) -> Result<Array2<f64>> {
        check_feature(record, self.model.feature_dim)?;
        let table = self.refs.get(&record.object)?;
        let d = self.model.feature_dim;
        let mut x = Array2::zeros((self.grid.len(), 2 * d));
        let phi = ArrayView2::from_shape((1, d), &record.feature).expect("checked length");
        x.slice_mut(s![.., ..d]).assign(&phi.broadcast((self.grid.len(), d)).expect("row broadcast"));
        x.slice_mut(s![.., d..]).assign(table);
        Ok(x)
    }

    /// Unnormalized score of every grid vertex, each in `(0, 1]`.
    pub fn scores(&self, record: &Record) -> Result<Vec<f64>> {
        let out = self.model.net.predict(self.inputs(record)?.view())?;
        Ok(out.iter().map(|v| v + SCORE_FLOOR).collect())
    }

    pub fn histogram(&self, record: &Record) -> Result<GriddedHistogram> {
        GriddedHistogram::new(self.grid.clone(), self.scores(record)?, self.model.k)
    }

    /// Loss of one record and its parameter gradients; dropout is applied
    /// when `rng` is given.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        record: &Record,
        rng: Option<&mut R>,
    ) -> Result<(f64, super::mlp::MlpGrads)> {
        let x = self.inputs(record)?;
        let cache = self.model.net.forward(x.view(), rng)?;
        let scores: Vec<f64> = cache.output().iter().map(|v| v + SCORE_FLOOR).collect();
        let stencil = KnnWeights::new(&self.grid, &record.q_true, self.model.k);
        let loss = nll_loss_with(&scores, &stencil)?;
        if !loss.value.is_finite() {
            return Err(Error::InvalidInput("comparison loss is not finite".into()));
        }
        let g = Array2::from_shape_vec((scores.len(), 1), loss.grad).expect("one column");
        Ok((loss.value, self.model.net.backward(&cache, g.view())?))
    }

    /// One Adam step per record; returns the mean loss of every epoch.
    pub fn train<R: Rng + ?Sized>(&mut self, records: &[Record], cfg: &TrainConfig, rng: &mut R) -> Result<Vec<f64>> {
        cfg.validate()?;
        check_nonempty(records)?;
        for r in records {
            check_feature(r, self.model.feature_dim)?;
            self.refs.get(&r.object)?;
        }
        let mut opt = MlpAdam::new(&self.model.net, AdamConfig { lr: cfg.lr, ..Default::default() });
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let mut total = 0.0;
            for i in epoch_order(records.len(), rng) {
                let (loss, grads) = self.loss_and_grads(&records[i], Some(&mut *rng))?;
                opt.step(&mut self.model.net, &grads);
                total += loss;
            }
            let mean = total / records.len() as f64;
            tracing::debug!(epoch, mean, "comparison epoch");
            history.push(mean);
        }
        Ok(history)
    }
}
