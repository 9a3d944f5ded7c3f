//! Fitting any method from a training set, producing a checkpoint.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bingham_head::BinghamHead;
use super::checkpoint::{Checkpoint, FittedModel, METHOD_NAMES};
use super::comparison::{ComparisonModel, ComparisonScorer};
use super::direct::{DirectModel, DirectRegressor};
use super::dropout::{DropoutRegressor, DEFAULT_MC_DROPOUT};
use super::tune::{tune_fixed_lambda, tune_mixture_lambda};
use crate::config::RunConfig;
use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::grid::S3Grid;

/// A checkpoint plus per-epoch training loss (empty for tuned methods).
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<f64>,
}

fn by_object(ds: &Dataset) -> BTreeMap<String, Vec<Record>> {
    let mut m: BTreeMap<String, Vec<Record>> = BTreeMap::new();
    for r in &ds.records {
        m.entry(r.object.clone()).or_default().push(r.clone());
    }
    m
}

/// Fits `method` on `train`. All randomness derives from `cfg.seed`.
pub fn fit_method(method: &str, train: &Dataset, grid: Arc<S3Grid>, cfg: &RunConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    if grid.level() != cfg.grid_level {
        return Err(Error::GridMismatch {
            checkpoint: grid.level(),
            config: cfg.grid_level,
        });
    }
    if train.records.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed(&format!("fit/{method}")));
    let dim = train.feature_dim();
    let objects = train
        .header
        .objects
        .iter()
        .map(|o| (o.id.clone(), o.symmetry.clone()))
        .collect();
    let mut history = Vec::new();
    let (model, hyper) = match method {
        "fixed-bingham" | "mixture" => {
            let mut lambdas = BTreeMap::new();
            for (id, recs) in by_object(train) {
                let t = if method == "mixture" {
                    tune_mixture_lambda(&recs, cfg.tune_trials, &mut rng)?
                } else {
                    tune_fixed_lambda(&recs, cfg.tune_trials, &mut rng)?
                };
                lambdas.insert(id, t.lambda);
            }
            let m = if method == "mixture" {
                FittedModel::Mixture { lambdas }
            } else {
                FittedModel::FixedBingham { lambdas }
            };
            (m, None)
        }
        "confusion" => {
            let pairs = by_object(train)
                .into_iter()
                .map(|(id, recs)| (id, recs.iter().map(|r| (r.q_est, r.q_true)).collect()))
                .collect();
            (FittedModel::Confusion { epsilon: cfg.laplace_epsilon, pairs }, None)
        }
        "mc-dropout" => {
            let mut tc = cfg.train.clone();
            if tc.dropout == 0.0 {
                tc.dropout = DEFAULT_MC_DROPOUT;
            }
            let mut reg = DropoutRegressor::new(&tc, dim, &mut rng)?;
            history = reg.train(&train.records, &tc, &mut rng)?;
            (FittedModel::McDropout { regressor: reg, passes: cfg.mc_passes }, Some(tc))
        }
        "bingham-head" => {
            let mut head = BinghamHead::new(&cfg.train, dim, cfg.head_gain, &mut rng)?;
            history = head.train(&train.records, &cfg.train, &mut rng)?;
            (FittedModel::BinghamHead(head), Some(cfg.train.clone()))
        }
        "comparison" => {
            let model = ComparisonModel::new(&cfg.train, grid.level(), cfg.k, objects, &mut rng)?;
            let mut scorer = ComparisonScorer::new(model, grid)?;
            history = scorer.train(&train.records, &cfg.train, &mut rng)?;
            (FittedModel::Comparison(scorer.into_model()), Some(cfg.train.clone()))
        }
        "direct-histogram" => {
            let model = DirectModel::new(&cfg.train, dim, &grid, cfg.k, &mut rng)?;
            let mut reg = DirectRegressor::new(model, grid)?;
            history = reg.train(&train.records, &cfg.train, &mut rng)?;
            (FittedModel::DirectHistogram(reg.into_model()), Some(cfg.train.clone()))
        }
        "uniform" | "cosine" => {
            return Err(Error::InvalidInput(format!("method `{method}` has nothing to fit")));
        }
        other => {
            debug_assert!(!METHOD_NAMES.contains(&other));
            return Err(Error::UnknownMethod(other.into()));
        }
    };
    Ok(FitOutcome {
        checkpoint: Checkpoint::new(cfg.grid_level, cfg.k, cfg.seed, hyper, model),
        history,
    })
}
