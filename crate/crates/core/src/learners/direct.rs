//! Direct histogram regression: the network maps the feature straight to
//! one score per grid vertex.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, MlpAdam};
use super::comparison::SCORE_FLOOR;
use super::mlp::{Activation, Mlp, MlpGrads, MlpSpec};
use super::{check_feature, check_nonempty, epoch_order, TrainConfig};
use crate::data::Record;
use crate::error::{Error, Result};
use crate::grid::S3Grid;
use crate::histogram::{nll_loss_with, GriddedHistogram, KnnWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectModel {
    pub net: Mlp,
    pub grid_level: u32,
    pub k: usize,
}

impl DirectModel {
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, feature_dim: usize, grid: &S3Grid, k: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let spec = MlpSpec {
            widths: cfg.widths(feature_dim, grid.len()),
            hidden: Activation::Relu,
            output: Activation::Sigmoid,
            dropout: cfg.dropout_rates(),
        };
        Ok(DirectModel {
            net: Mlp::new(&spec, rng)?,
            grid_level: grid.level(),
            k,
        })
    }
}

#[derive(Clone, Debug)]
pub struct DirectRegressor {
    model: DirectModel,
    grid: Arc<S3Grid>,
}

impl DirectRegressor {
    pub fn new(model: DirectModel, grid: Arc<S3Grid>) -> Result<Self> {
        if model.grid_level != grid.level() {
            return Err(Error::GridMismatch {
                checkpoint: model.grid_level,
                config: grid.level(),
            });
        }
        if model.net.output_width() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: model.net.output_width(),
            });
        }
        Ok(DirectRegressor { model, grid })
    }

    pub fn model(&self) -> &DirectModel {
        &self.model
    }

    pub fn into_model(self) -> DirectModel {
        self.model
    }

    fn batch_inputs(&self, batch: &[&Record]) -> Result<Array2<f64>> {
        let d = self.model.net.input_width();
        let mut x = Array2::zeros((batch.len(), d));
        for (i, r) in batch.iter().enumerate() {
            check_feature(r, d)?;
            x.row_mut(i).assign(&ArrayView1::from(&r.feature));
        }
        Ok(x)
    }

    pub fn scores(&self, record: &Record) -> Result<Vec<f64>> {
        let out = self.model.net.predict(self.batch_inputs(&[record])?.view())?;
        Ok(out.iter().map(|v| v + SCORE_FLOOR).collect())
    }

    pub fn histogram(&self, record: &Record) -> Result<GriddedHistogram> {
        GriddedHistogram::new(self.grid.clone(), self.scores(record)?, self.model.k)
    }

    /// Mean loss over `batch` and its gradients.
    pub fn loss_and_grads<R: Rng + ?Sized>(&self, batch: &[&Record], rng: Option<&mut R>) -> Result<(f64, MlpGrads)> {
        let x = self.batch_inputs(batch)?;
        let cache = self.model.net.forward(x.view(), rng)?;
        let n = batch.len() as f64;
        let mut g = Array2::zeros(cache.output().dim());
        let mut total = 0.0;
        for (i, r) in batch.iter().enumerate() {
            let scores: Vec<f64> = cache.output().row(i).iter().map(|v| v + SCORE_FLOOR).collect();
            let stencil = KnnWeights::new(&self.grid, &r.q_true, self.model.k);
            let loss = nll_loss_with(&scores, &stencil)?;
            if !loss.value.is_finite() {
                return Err(Error::InvalidInput("direct-regression loss is not finite".into()));
            }
            total += loss.value;
            for (dst, src) in g.row_mut(i).iter_mut().zip(&loss.grad) {
                *dst = src / n;
            }
        }
        Ok((total / n, self.model.net.backward(&cache, g.view())?))
    }

    pub fn train<R: Rng + ?Sized>(&mut self, records: &[Record], cfg: &TrainConfig, rng: &mut R) -> Result<Vec<f64>> {
        cfg.validate()?;
        check_nonempty(records)?;
        let mut opt = MlpAdam::new(&self.model.net, AdamConfig { lr: cfg.lr, ..Default::default() });
        let mut history = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            let order = epoch_order(records.len(), rng);
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&Record> = chunk.iter().map(|&i| &records[i]).collect();
                let (loss, grads) = self.loss_and_grads(&batch, Some(&mut *rng))?;
                opt.step(&mut self.model.net, &grads);
                total += loss * batch.len() as f64;
            }
            history.push(total / records.len() as f64);
        }
        Ok(history)
    }
}
