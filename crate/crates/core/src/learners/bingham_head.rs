//! Isotropic Bingham regression: a network maps the feature to a single
//! concentration `λ`, and the distribution is centered on the base estimate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, MlpAdam};
use super::mlp::{softplus, softplus_inverse, sigmoid, Activation, Mlp, MlpGrads, MlpSpec};
use super::{check_feature, check_nonempty, epoch_order, TrainConfig};
use crate::bingham::{iso_log_norm_const, iso_log_norm_const_grad, BinghamDist, CONCENTRATION_CAP};
use crate::data::Record;
use crate::error::{Error, Result};

/// Offset keeping `λ` strictly positive.
pub const LAMBDA_OFFSET: f64 = 1e-4;

/// Concentration at initialization, before any training.
pub const INITIAL_LAMBDA: f64 = 10.0;

pub const DEFAULT_OUTPUT_GAIN: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinghamHead {
    pub net: Mlp,
    /// `λ = softplus(gain · o) + offset` for network output `o`; a gain
    /// above one lets `λ` span its range in few optimizer steps.
    pub output_gain: f64,
}

impl BinghamHead {
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, feature_dim: usize, output_gain: f64, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if !(output_gain > 0.0 && output_gain.is_finite()) {
            return Err(Error::InvalidParameter(format!("output gain must be > 0, got {output_gain}")));
        }
        let spec = MlpSpec {
            widths: cfg.widths(feature_dim, 1),
            hidden: Activation::Relu,
            output: Activation::Identity,
            dropout: cfg.dropout_rates(),
        };
        let mut net = Mlp::new(&spec, rng)?;
        let last = net.layers_mut().last_mut().expect("nonempty");
        last.bias.fill(softplus_inverse(INITIAL_LAMBDA - LAMBDA_OFFSET) / output_gain);
        Ok(BinghamHead { net, output_gain })
    }

    fn lambda_of(&self, o: f64) -> f64 {
        (softplus(self.output_gain * o) + LAMBDA_OFFSET).min(CONCENTRATION_CAP)
    }

    pub fn lambda(&self, feature: &[f64]) -> Result<f64> {
        if feature.len() != self.net.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.net.input_width(),
                got: feature.len(),
            });
        }
        let x = ndarray::ArrayView2::from_shape((1, feature.len()), feature).expect("one row");
        Ok(self.lambda_of(self.net.predict(x)?[(0, 0)]))
    }

    /// Isotropic Bingham centered on the record's base estimate.
    pub fn distribution(&self, record: &Record) -> Result<BinghamDist> {
        BinghamDist::isotropic(record.q_est, self.lambda(&record.feature)?)
    }

    /// Mean negative log likelihood over `batch` and its gradients.
    pub fn loss_and_grads<R: Rng + ?Sized>(&self, batch: &[&Record], rng: Option<&mut R>) -> Result<(f64, MlpGrads)> {
        let d = self.net.input_width();
        let mut x = ndarray::Array2::zeros((batch.len(), d));
        for (i, r) in batch.iter().enumerate() {
            check_feature(r, d)?;
            x.row_mut(i).assign(&ndarray::ArrayView1::from(&r.feature));
        }
        let cache = self.net.forward(x.view(), rng)?;
        let n = batch.len() as f64;
        let mut total = 0.0;
        let mut g = ndarray::Array2::zeros((batch.len(), 1));
        for (i, r) in batch.iter().enumerate() {
            let o = cache.output()[(i, 0)];
            let raw = softplus(self.output_gain * o) + LAMBDA_OFFSET;
            let lambda = raw.min(CONCENTRATION_CAP);
            let c = r.q_est.dot(&r.q_true);
            let gap = 1.0 - c * c;
            total += -(std::f64::consts::LN_2 - lambda * gap - iso_log_norm_const(lambda)?);
            let dl_dlambda = gap + iso_log_norm_const_grad(lambda)?;
            // at the cap only gradients that lower λ pass through
            let dl_dlambda = if raw > CONCENTRATION_CAP { dl_dlambda.max(0.0) } else { dl_dlambda };
            g[(i, 0)] = dl_dlambda * self.output_gain * sigmoid(self.output_gain * o) / n;
        }
        Ok((total / n, self.net.backward(&cache, g.view())?))
    }

    /// Minibatch Adam; returns the mean loss of every epoch.
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
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_dataset, NoiseModel, SynthConfig};
    use crate::symmetry::SymmetrySpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(epochs: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            hidden: vec![32, 32],
            epochs,
            lr,
            batch_size: 16,
            dropout: 0.0,
        }
    }

    fn data(noise: NoiseModel, n: usize, seed: u64) -> Vec<Record> {
        let c = SynthConfig {
            objects: vec![("obj".into(), SymmetrySpec::None)],
            records_per_object: n,
            noise,
            ..Default::default()
        };
        synth_dataset(&c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().records
    }

    #[test]
    fn initial_lambda() {
        let h = BinghamHead::new(&cfg(1, 1e-3), 10, 20.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut net0 = h.clone();
        for l in net0.net.layers_mut() {
            l.weights.fill(0.0);
        }
        assert!((net0.lambda(&[0.0; 10]).unwrap() - INITIAL_LAMBDA).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = BinghamHead::new(&cfg(1, 1e-3), 10, 20.0, &mut rng).unwrap();
        let recs = data(NoiseModel::default(), 8, 3);
        let batch: Vec<&Record> = recs.iter().collect();
        let (_, g) = h.loss_and_grads::<ChaCha8Rng>(&batch, None).unwrap();
        let eps = 1e-6;
        for (li, r, c) in [(0, 0, 0), (0, 9, 31), (1, 4, 4), (2, 7, 0), (2, 30, 0)] {
            let mut p = h.clone();
            p.net.layers_mut()[li].weights[(r, c)] += eps;
            let mut m = h.clone();
            m.net.layers_mut()[li].weights[(r, c)] -= eps;
            let lp = p.loss_and_grads::<ChaCha8Rng>(&batch, None).unwrap().0;
            let lm = m.loss_and_grads::<ChaCha8Rng>(&batch, None).unwrap().0;
            let fd = (lp - lm) / (2.0 * eps);
            let an = g.layers[li].0[(r, c)];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(1e-4), "{li} {r} {c}: {fd} vs {an}");
        }
    }

    #[test]
    fn exact_estimates_drive_lambda_to_cap() {
        let quiet = NoiseModel { sigma_min_deg: 0.0, sigma_max_deg: 0.0, feature_noise: 0.0, translation_noise: 0.0 };
        let recs = data(quiet, 64, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut h = BinghamHead::new(&cfg(1, 1e-2), 10, 20.0, &mut rng).unwrap();
        h.train(&recs, &cfg(60, 1e-2), &mut rng).unwrap();
        let l = h.lambda(&recs[0].feature).unwrap();
        assert!(l > 0.99 * CONCENTRATION_CAP, "{l}");
    }

    #[test]
    fn scattered_estimates_drive_lambda_to_zero() {
        let mut recs = data(NoiseModel::default(), 256, 6);
        let mut r = ChaCha8Rng::seed_from_u64(7);
        for rec in &mut recs {
            rec.q_est = crate::quat::UnitQuaternion::random_uniform(&mut r);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut h = BinghamHead::new(&cfg(1, 1e-2), 10, 20.0, &mut rng).unwrap();
        let hist = h.train(&recs, &cfg(40, 1e-2), &mut rng).unwrap();
        let l = h.lambda(&recs[0].feature).unwrap();
        assert!(l < 0.5, "{l}");
        // mean log likelihood approaches the uniform value −ln π²
        assert!((-hist.last().unwrap() + (std::f64::consts::PI.powi(2)).ln()).abs() < 0.1, "{hist:?}");
    }
}
