//! MC-dropout baseline: a dropout-trained pose regressor is run repeatedly
//! with fresh masks and a Bingham is fitted to the resulting poses.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, MlpAdam};
use super::mlp::{Activation, Mlp, MlpGrads, MlpSpec};
use super::{check_feature, check_nonempty, epoch_order, TrainConfig};
use crate::bingham::{fit_to_samples, BinghamFit};
use crate::data::Record;
use crate::error::{Error, Result};
use crate::quat::UnitQuaternion;

/// Stochastic passes per prediction.
pub const DEFAULT_PASSES: usize = 50;

/// Dropout rate used when the configuration asks for none.
pub const DEFAULT_MC_DROPOUT: f64 = 0.1;

/// Regressor output norm below which a pass is discarded.
const MIN_OUTPUT_NORM: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutRegressor {
    pub net: Mlp,
}

impl DropoutRegressor {
    /// Hidden layers from `cfg`, four linear outputs; `cfg.dropout` must be
    /// positive for the passes to differ.
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, feature_dim: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let spec = MlpSpec {
            widths: cfg.widths(feature_dim, 4),
            hidden: Activation::Relu,
            output: Activation::Identity,
            dropout: cfg.dropout_rates(),
        };
        Ok(DropoutRegressor { net: Mlp::new(&spec, rng)? })
    }

    fn inputs(&self, batch: &[&Record]) -> Result<Array2<f64>> {
        let d = self.net.input_width();
        let mut x = Array2::zeros((batch.len(), d));
        for (i, r) in batch.iter().enumerate() {
            check_feature(r, d)?;
            x.row_mut(i).assign(&ArrayView1::from(&r.feature));
        }
        Ok(x)
    }

    /// Mean of `1 − (u·q*)²` with `u` the normalized output, and gradients.
    pub fn loss_and_grads<R: Rng + ?Sized>(&self, batch: &[&Record], rng: Option<&mut R>) -> Result<(f64, MlpGrads)> {
        let x = self.inputs(batch)?;
        let cache = self.net.forward(x.view(), rng)?;
        let n = batch.len() as f64;
        let mut g = Array2::zeros((batch.len(), 4));
        let mut total = 0.0;
        for (i, r) in batch.iter().enumerate() {
            let o = cache.output().row(i);
            let norm = o.dot(&o).sqrt().max(MIN_OUTPUT_NORM);
            let q = r.q_true.to_array();
            let c = (0..4).map(|k| o[k] * q[k]).sum::<f64>() / norm;
            total += 1.0 - c * c;
            for k in 0..4 {
                g[(i, k)] = -2.0 * c * (q[k] - c * o[k] / norm) / norm / n;
            }
        }
        Ok((total / n, self.net.backward(&cache, g.view())?))
    }

    pub fn train<R: Rng + ?Sized>(&mut self, records: &[Record], cfg: &TrainConfig, rng: &mut R) -> Result<Vec<f64>> {
        cfg.validate()?;
        check_nonempty(records)?;
        let mut opt = MlpAdam::new(&self.net, AdamConfig { lr: cfg.lr, ..Default::default() });
        let mut history = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            let order = epoch_order(records.len(), rng);
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&Record> = chunk.iter().map(|&i| &records[i]).collect();
                let (loss, grads) = self.loss_and_grads(&batch, Some(&mut *rng))?;
                opt.step(&mut self.net, &grads);
                total += loss * batch.len() as f64;
            }
            history.push(total / records.len() as f64);
        }
        Ok(history)
    }

    /// Deterministic pose estimate (no dropout).
    pub fn predict(&self, record: &Record) -> Result<UnitQuaternion> {
        let o = self.net.predict(self.inputs(&[record])?.view())?;
        UnitQuaternion::normalize([o[(0, 0)], o[(0, 1)], o[(0, 2)], o[(0, 3)]])
    }

    /// `passes` dropout samples of the pose.
    pub fn sample_poses<R: Rng + ?Sized>(&self, record: &Record, passes: usize, rng: &mut R) -> Result<Vec<UnitQuaternion>> {
        let x = self.inputs(&[record])?;
        let xs = x.broadcast((passes, x.ncols())).expect("row broadcast").to_owned();
        let cache = self.net.forward(xs.view(), Some(rng))?;
        Ok(cache
            .output()
            .rows()
            .into_iter()
            .filter_map(|o| UnitQuaternion::normalize([o[0], o[1], o[2], o[3]]).ok())
            .collect())
    }

    /// Bingham fitted to `passes` dropout samples.
    pub fn distribution<R: Rng + ?Sized>(&self, record: &Record, passes: usize, rng: &mut R) -> Result<BinghamFit> {
        let samples = self.sample_poses(record, passes, rng)?;
        if samples.len() < 5 {
            return Err(Error::InsufficientData(format!("only {} usable dropout samples", samples.len())));
        }
        fit_to_samples(&samples)
    }
}
