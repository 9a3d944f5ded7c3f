//! Synthetic datasets with known ground truth.
//!
//! Ground-truth rotations are uniform. A perceived pose `q̃ = q* ⊗ δ` adds
//! Gaussian tangent noise whose scale may depend on the pose; the base
//! estimate is `q̃ ⊗ p` for a uniformly drawn symmetry element `p`, and the
//! features encode `q̃` symmetry-invariantly plus the noise level.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::{pose_features, FEATURE_DIM, FEATURE_MODEL, POSE_FEATURE_DIM};
use super::{Candidate, Dataset, ObjectSpec, Record};
use crate::error::{Error, Result};
use crate::quat::UnitQuaternion;
use crate::symmetry::SymmetrySpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Rotation noise scale (per tangent axis) at the quietest pose.
    pub sigma_min_deg: f64,
    /// Scale at the noisiest pose; equal to `sigma_min_deg` for
    /// pose-independent noise.
    pub sigma_max_deg: f64,
    /// Standard deviation added to each pose-feature component.
    pub feature_noise: f64,
    /// Standard deviation (meters) of translation estimates per axis.
    pub translation_noise: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_min_deg: 3.0,
            sigma_max_deg: 25.0,
            feature_noise: 0.02,
            translation_noise: 0.01,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_min_deg >= 0.0
            && self.sigma_max_deg >= self.sigma_min_deg
            && self.sigma_max_deg.is_finite()
            && self.feature_noise >= 0.0
            && self.translation_noise >= 0.0;
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid noise model {self:?}")));
        }
        Ok(())
    }

    /// Noise scale (radians) at `q_true`, rising with the tilt of the body
    /// z axis away from the camera z axis.
    pub fn sigma(&self, q_true: &UnitQuaternion) -> f64 {
        let z = q_true.rotate_vector([0.0, 0.0, 1.0]);
        let u = 0.5 * (1.0 - z[2]);
        (self.sigma_min_deg + (self.sigma_max_deg - self.sigma_min_deg) * u).to_radians()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub objects: Vec<(String, SymmetrySpec)>,
    pub records_per_object: usize,
    pub noise: NoiseModel,
    /// Candidate estimates per record, the first being the base estimate.
    pub candidates: usize,
    pub model_points: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            objects: vec![("object".into(), SymmetrySpec::None)],
            records_per_object: 1000,
            noise: NoiseModel::default(),
            candidates: 3,
            model_points: 64,
        }
    }
}

fn compose<R: Rng + ?Sized>(q: &UnitQuaternion, sym: &SymmetrySpec, rng: &mut R) -> UnitQuaternion {
    match sym {
        SymmetrySpec::None => *q,
        _ => q.multiply(&random_symmetry(sym, rng)),
    }
}

/// `q ⊗ exp(ω/2)` with `ω ~ N(0, σ² I₃)`.
pub fn perturb<R: Rng + ?Sized>(q: &UnitQuaternion, sigma: f64, rng: &mut R) -> UnitQuaternion {
    let w: [f64; 3] = std::array::from_fn(|_| {
        let g: f64 = StandardNormal.sample(rng);
        g * sigma
    });
    let angle = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    if angle < 1e-300 {
        return *q;
    }
    q.multiply(&UnitQuaternion::from_axis_angle(w, angle).expect("nonzero axis"))
}

/// Uniformly drawn element of the symmetry group.
pub fn random_symmetry<R: Rng + ?Sized>(sym: &SymmetrySpec, rng: &mut R) -> UnitQuaternion {
    match sym {
        SymmetrySpec::None => UnitQuaternion::IDENTITY,
        SymmetrySpec::Discrete { elements } => elements[rng.random_range(0..elements.len())],
        SymmetrySpec::Continuous { axis } => {
            let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            UnitQuaternion::from_axis_angle(*axis, angle).expect("unit axis")
        }
    }
}

pub fn synth_dataset<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<Dataset> {
    cfg.noise.validate()?;
    if cfg.objects.is_empty() {
        return Err(Error::InvalidParameter("synthetic dataset needs at least one object".into()));
    }
    let feature_noise = Normal::new(0.0, cfg.noise.feature_noise.max(0.0))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let trans_noise = Normal::new(0.0, cfg.noise.translation_noise)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut objects = Vec::new();
    let mut records = Vec::new();
    for (id, sym) in &cfg.objects {
        sym.validate()?;
        let half = [0.05, 0.03, 0.02];
        let points = (0..cfg.model_points)
            .map(|_| std::array::from_fn(|k| rng.random_range(-half[k]..half[k])))
            .collect();
        objects.push(ObjectSpec {
            id: id.clone(),
            symmetry: sym.clone(),
            model_points: Some(points),
        });
        for _ in 0..cfg.records_per_object {
            let q_true = UnitQuaternion::random_uniform(rng);
            let sigma = cfg.noise.sigma(&q_true);
            let perceived = perturb(&q_true, sigma, rng);
            let q_est = compose(&perceived, sym, rng);
            let mut candidates = Vec::with_capacity(cfg.candidates);
            for c in 0..cfg.candidates {
                let q = if c == 0 {
                    q_est
                } else {
                    compose(&perturb(&perceived, sigma, rng), sym, rng)
                };
                candidates.push(Candidate {
                    q,
                    confidence: rng.random_range(0.2..1.0),
                });
            }
            let pose = pose_features(&perceived, sym)?;
            let mut feature = Vec::with_capacity(FEATURE_DIM);
            for v in pose.iter().take(POSE_FEATURE_DIM) {
                feature.push(v + feature_noise.sample(rng));
            }
            feature.push(sigma);
            let t_true = [
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(0.6..1.2),
            ];
            let t_est = std::array::from_fn(|k| t_true[k] + trans_noise.sample(rng));
            records.push(Record {
                object: id.clone(),
                q_true,
                q_est,
                candidates,
                feature,
                t_true: Some(t_true),
                t_est: Some(t_est),
            });
        }
    }
    Dataset::new(objects, FEATURE_DIM, Some(FEATURE_MODEL.into()), records)
}

/// Splits records by viewpoint: those whose rotated body z axis lies within
/// `half_angle_deg` of `direction` go to the second list.
pub fn viewpoint_split(records: &[Record], direction: [f64; 3], half_angle_deg: f64) -> (Vec<Record>, Vec<Record>) {
    let n = (direction[0].powi(2) + direction[1].powi(2) + direction[2].powi(2)).sqrt();
    let cos_max = half_angle_deg.to_radians().cos();
    records.iter().cloned().partition(|r| {
        let z = r.q_true.rotate_vector([0.0, 0.0, 1.0]);
        (z[0] * direction[0] + z[1] * direction[1] + z[2] * direction[2]) / n < cos_max
    })
}
