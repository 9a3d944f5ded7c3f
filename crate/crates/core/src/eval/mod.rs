//! Evaluating orientation distributions: ground-truth likelihood, pose
//! errors of the distribution mode, and likelihood-based filtering.

pub mod metrics;
pub mod report;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bingham::{BinghamDist, BinghamMixture};
use crate::config::derive_seed;
use crate::data::{Dataset, ObjectSpec, Record};
use crate::error::{Error, Result};
use crate::grid::S3Grid;
use crate::histogram::{ConfusionMatrix, GriddedHistogram};
use crate::learners::bingham_head::BinghamHead;
use crate::learners::checkpoint::{Checkpoint, FittedModel};
use crate::learners::comparison::ComparisonScorer;
use crate::learners::cosine::CosineHistogram;
use crate::learners::direct::DirectRegressor;
use crate::learners::dropout::DropoutRegressor;
use crate::learners::tune::candidate_mixture;
use crate::quat::UnitQuaternion;
use crate::symmetry::SymmetrySpec;
use metrics::{add_error, add_s_error, Pose};

/// Densities below this are clipped before taking the log.
pub const LIKELIHOOD_FLOOR: f64 = 1e-6;

/// Density of the uniform distribution over unique rotations.
pub const CHANCE_DENSITY: f64 = 1.0 / (PI * PI);

/// `ln(max(density, floor))`; NaN counts as zero density.
pub fn clipped_log(density: f64) -> f64 {
    if density >= LIKELIHOOD_FLOOR {
        density.ln()
    } else {
        LIKELIHOOD_FLOOR.ln()
    }
}

/// Orientation distribution predicted for one record.
#[derive(Clone, Debug)]
pub enum RecordDensity {
    Uniform,
    Bingham(BinghamDist),
    Mixture(BinghamMixture),
    Histogram(GriddedHistogram),
}

impl RecordDensity {
    pub fn pdf(&self, q: &UnitQuaternion) -> f64 {
        match self {
            RecordDensity::Uniform => CHANCE_DENSITY,
            RecordDensity::Bingham(d) => d.pdf(q),
            RecordDensity::Mixture(m) => m.pdf(q),
            RecordDensity::Histogram(h) => h.pdf_at(q),
        }
    }

    /// Most probable orientation; `None` for the uniform distribution.
    pub fn mode(&self) -> Option<UnitQuaternion> {
        match self {
            RecordDensity::Uniform => None,
            RecordDensity::Bingham(d) => Some(d.mode()),
            RecordDensity::Mixture(m) => Some(m.mode()),
            RecordDensity::Histogram(h) => Some(h.mode()),
        }
    }
}

/// A method ready to produce per-record densities.
#[derive(Clone, Debug)]
pub enum Evaluator {
    Uniform,
    FixedBingham(BTreeMap<String, f64>),
    Mixture(BTreeMap<String, f64>),
    Confusion(BTreeMap<String, ConfusionMatrix>),
    McDropout { regressor: DropoutRegressor, passes: usize, seed: u64 },
    BinghamHead(BinghamHead),
    Comparison(ComparisonScorer),
    Cosine(CosineHistogram),
    Direct(DirectRegressor),
}

fn object_map(objects: &[ObjectSpec]) -> BTreeMap<String, SymmetrySpec> {
    objects.iter().map(|o| (o.id.clone(), o.symmetry.clone())).collect()
}

impl Evaluator {
    pub fn name(&self) -> &'static str {
        match self {
            Evaluator::Uniform => "uniform",
            Evaluator::FixedBingham(_) => "fixed-bingham",
            Evaluator::Mixture(_) => "mixture",
            Evaluator::Confusion(_) => "confusion",
            Evaluator::McDropout { .. } => "mc-dropout",
            Evaluator::BinghamHead(_) => "bingham-head",
            Evaluator::Comparison(_) => "comparison",
            Evaluator::Cosine(_) => "cosine",
            Evaluator::Direct(_) => "direct-histogram",
        }
    }

    /// Methods that need no fitted state.
    pub fn stateless(name: &str, grid: Arc<S3Grid>, k: usize, objects: &[ObjectSpec]) -> Result<Self> {
        match name {
            "uniform" => Ok(Evaluator::Uniform),
            "cosine" => Ok(Evaluator::Cosine(CosineHistogram::new(grid, k, &object_map(objects))?)),
            other if crate::learners::checkpoint::METHOD_NAMES.contains(&other) => Err(Error::InvalidInput(
                format!("method `{other}` needs a checkpoint (NAME=PATH)"),
            )),
            other => Err(Error::UnknownMethod(other.into())),
        }
    }

    /// Binds a checkpoint to `grid`; `seed` drives any sampling at
    /// evaluation time.
    pub fn from_checkpoint(ck: Checkpoint, grid: Arc<S3Grid>, seed: u64) -> Result<Self> {
        ck.check_grid(grid.level())?;
        Ok(match ck.model {
            FittedModel::FixedBingham { lambdas } => Evaluator::FixedBingham(lambdas),
            FittedModel::Mixture { lambdas } => Evaluator::Mixture(lambdas),
            FittedModel::Confusion { epsilon, pairs } => {
                let mut m = BTreeMap::new();
                for (id, p) in pairs {
                    m.insert(id, ConfusionMatrix::build(grid.clone(), &p, epsilon, ck.k)?);
                }
                Evaluator::Confusion(m)
            }
            FittedModel::McDropout { regressor, passes } => Evaluator::McDropout { regressor, passes, seed },
            FittedModel::BinghamHead(h) => Evaluator::BinghamHead(h),
            FittedModel::Comparison(m) => Evaluator::Comparison(ComparisonScorer::new(m, grid)?),
            FittedModel::DirectHistogram(m) => Evaluator::Direct(DirectRegressor::new(m, grid)?),
        })
    }

    /// Density for record `index` of a dataset.
    pub fn density(&self, index: usize, record: &Record) -> Result<RecordDensity> {
        let per_object = |m: &BTreeMap<String, f64>| {
            m.get(&record.object)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("no tuned concentration for object `{}`", record.object)))
        };
        Ok(match self {
            Evaluator::Uniform => RecordDensity::Uniform,
            Evaluator::FixedBingham(m) => RecordDensity::Bingham(BinghamDist::isotropic(record.q_est, per_object(m)?)?),
            Evaluator::Mixture(m) => RecordDensity::Mixture(candidate_mixture(record, per_object(m)?)?),
            Evaluator::Confusion(m) => {
                let cm = m.get(&record.object).ok_or_else(|| {
                    Error::InvalidInput(format!("no confusion matrix for object `{}`", record.object))
                })?;
                RecordDensity::Histogram(cm.lookup(&record.q_est)?)
            }
            Evaluator::McDropout { regressor, passes, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(*seed, &format!("mc-dropout/{index}")));
                RecordDensity::Bingham(regressor.distribution(record, *passes, &mut rng)?.dist)
            }
            Evaluator::BinghamHead(h) => RecordDensity::Bingham(h.distribution(record)?),
            Evaluator::Comparison(s) => RecordDensity::Histogram(s.histogram(record)?),
            Evaluator::Cosine(c) => RecordDensity::Histogram(c.histogram(record)?),
            Evaluator::Direct(d) => RecordDensity::Histogram(d.histogram(record)?),
        })
    }
}

/// Clipped log density of the ground truth.
pub fn gt_log_likelihood(density: &RecordDensity, record: &Record) -> f64 {
    clipped_log(density.pdf(&record.q_true))
}

/// Per-record outcome of evaluating one method.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordEval {
    pub log_likelihood: f64,
    /// Density at the base estimate, used for filtering.
    pub density_at_estimate: f64,
    /// Symmetry-aware angular error of the base estimate, degrees.
    pub estimate_angle_deg: f64,
    /// ADD (or ADD-S for symmetric objects) of the base estimate, meters.
    pub estimate_add: Option<f64>,
    /// Errors of the distribution mode; `None` for the uniform method.
    pub mode_angle_deg: Option<f64>,
    pub mode_add: Option<f64>,
}

/// ADD for objects without symmetry, ADD-S otherwise; `None` without model
/// points.
pub fn pose_distance(object: &ObjectSpec, record: &Record, q_est: &UnitQuaternion) -> Result<Option<f64>> {
    let Some(points) = object.model_points.as_deref() else {
        return Ok(None);
    };
    let truth = Pose::new(record.q_true, record.t_true);
    let est = Pose::new(*q_est, record.t_est);
    let d = match object.symmetry {
        SymmetrySpec::None => add_error(points, &truth, &est)?,
        _ => add_s_error(points, &truth, &est)?,
    };
    Ok(Some(d))
}

pub fn evaluate_record(ds: &Dataset, evaluator: &Evaluator, index: usize) -> Result<RecordEval> {
    let record = &ds.records[index];
    let object = ds
        .object(&record.object)
        .ok_or_else(|| Error::InvalidInput(format!("unknown object `{}`", record.object)))?;
    let sym = &object.symmetry;
    let density = evaluator.density(index, record)?;
    let mode = density.mode();
    Ok(RecordEval {
        log_likelihood: gt_log_likelihood(&density, record),
        density_at_estimate: density.pdf(&record.q_est),
        estimate_angle_deg: sym.angular_error_deg(&record.q_true, &record.q_est)?,
        estimate_add: pose_distance(object, record, &record.q_est)?,
        mode_angle_deg: mode.map(|m| sym.angular_error_deg(&record.q_true, &m)).transpose()?,
        mode_add: match mode {
            Some(m) => pose_distance(object, record, &m)?,
            None => None,
        },
    })
}

/// Evaluates every record in dataset order.
pub fn evaluate_dataset(ds: &Dataset, evaluator: &Evaluator) -> Result<Vec<RecordEval>> {
    (0..ds.records.len()).map(|i| evaluate_record(ds, evaluator, i)).collect()
}

/// One row of the filtering table.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterRow {
    pub multiplier: f64,
    pub threshold: f64,
    pub retained: usize,
    pub reject_pct: f64,
    /// `None` when every record was rejected.
    pub mean_angle_deg: Option<f64>,
    /// `None` when no retained record has model points.
    pub mean_add: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Keeps records whose density at the base estimate is at least
/// `multiplier · CHANCE_DENSITY` (inclusive) and summarizes them.
pub fn filter_by_likelihood(evals: &[RecordEval], multipliers: &[f64]) -> Result<Vec<FilterRow>> {
    if evals.is_empty() {
        return Err(Error::InvalidInput("no records to filter".into()));
    }
    Ok(multipliers
        .iter()
        .map(|&m| {
            let threshold = m * CHANCE_DENSITY;
            let kept: Vec<&RecordEval> = evals.iter().filter(|e| e.density_at_estimate >= threshold).collect();
            FilterRow {
                multiplier: m,
                threshold,
                retained: kept.len(),
                reject_pct: 100.0 * (evals.len() - kept.len()) as f64 / evals.len() as f64,
                mean_angle_deg: mean(kept.iter().map(|e| e.estimate_angle_deg)),
                mean_add: mean(kept.iter().filter_map(|e| e.estimate_add)),
            }
        })
        .collect())
}
