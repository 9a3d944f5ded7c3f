//! Pose-error metrics.

use crate::error::{Error, Result};
use crate::quat::UnitQuaternion;

/// A rigid pose; a missing translation is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub q: UnitQuaternion,
    pub t: [f64; 3],
}

impl Pose {
    pub fn new(q: UnitQuaternion, t: Option<[f64; 3]>) -> Self {
        Pose { q, t: t.unwrap_or([0.0; 3]) }
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let r = self.q.rotate_vector(x);
        [r[0] + self.t[0], r[1] + self.t[1], r[2] + self.t[2]]
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn check_points(points: &[[f64; 3]]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidInput("model point set is empty".into()));
    }
    Ok(())
}

/// Mean distance between corresponding transformed model points.
pub fn add_error(points: &[[f64; 3]], truth: &Pose, est: &Pose) -> Result<f64> {
    check_points(points)?;
    let sum: f64 = points.iter().map(|x| dist(truth.apply(*x), est.apply(*x))).sum();
    Ok(sum / points.len() as f64)
}

/// Mean distance from each true-pose point to the nearest estimated-pose
/// point.
pub fn add_s_error(points: &[[f64; 3]], truth: &Pose, est: &Pose) -> Result<f64> {
    check_points(points)?;
    let moved: Vec<[f64; 3]> = points.iter().map(|y| est.apply(*y)).collect();
    let sum: f64 = points
        .iter()
        .map(|x| {
            let a = truth.apply(*x);
            moved.iter().map(|b| dist(a, *b)).fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(sum / points.len() as f64)
}

/// Area under the accuracy-vs-threshold step curve on `[0, max_threshold]`,
/// normalized to `[0, 1]`: accuracy at `t` is the fraction of errors `≤ t`.
pub fn auc(errors: &[f64], max_threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("AUC of an empty error list".into()));
    }
    if !(max_threshold > 0.0 && max_threshold.is_finite()) {
        return Err(Error::InvalidParameter(format!("AUC threshold must be > 0, got {max_threshold}")));
    }
    let sum: f64 = errors
        .iter()
        .map(|e| {
            let e = if e.is_nan() { max_threshold } else { e.clamp(0.0, max_threshold) };
            (max_threshold - e) / max_threshold
        })
        .sum();
    Ok(sum / errors.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_poses_have_zero_error() {
        let pts = [[0.1, 0.0, 0.0], [0.0, -0.2, 0.05]];
        let p = Pose::new(UnitQuaternion::normalize([0.3, 0.1, -0.5, 0.2]).unwrap(), Some([0.1, 0.2, 0.9]));
        assert_eq!(add_error(&pts, &p, &p).unwrap(), 0.0);
        assert_eq!(add_s_error(&pts, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn pure_translation_offset() {
        let pts = [[0.1, 0.0, 0.0], [0.0, -0.2, 0.05], [0.3, 0.3, 0.3]];
        let q = UnitQuaternion::normalize([1.0, 0.2, 0.0, 0.1]).unwrap();
        let a = Pose::new(q, Some([0.0, 0.0, 1.0]));
        let b = Pose::new(q, Some([0.03, 0.0, 1.04]));
        assert!((add_error(&pts, &a, &b).unwrap() - 0.05).abs() < 1e-12);
        assert!(add_error(&[], &a, &b).is_err());
        assert!(add_s_error(&[], &a, &b).is_err());
    }

    #[test]
    fn add_s_never_exceeds_add() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let pts: Vec<[f64; 3]> = (0..20).map(|_| std::array::from_fn(|_| r.random_range(-0.1..0.1))).collect();
            let a = Pose::new(UnitQuaternion::random_uniform(&mut r), Some(std::array::from_fn(|_| r.random_range(-1.0..1.0))));
            let b = Pose::new(UnitQuaternion::random_uniform(&mut r), Some(std::array::from_fn(|_| r.random_range(-1.0..1.0))));
            assert!(add_s_error(&pts, &a, &b).unwrap() <= add_error(&pts, &a, &b).unwrap() + 1e-15);
        }
    }

    #[test]
    fn auc_trivial_cases() {
        assert_eq!(auc(&[0.0, 0.0], 0.1).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.5], 0.1).unwrap(), 0.0);
        assert!((auc(&[0.05], 0.1).unwrap() - 0.5).abs() < 1e-12);
        assert!(auc(&[], 0.1).is_err());
        assert!(auc(&[0.0], 0.0).is_err());
    }
}
