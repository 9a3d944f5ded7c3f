//! Sub-random search for a fixed concentration.
//!
//! Candidates follow the golden-ratio additive recurrence over `ln λ`, with a
//! random starting offset; the two bounds are always evaluated first. The
//! best candidate is then polished by golden-section search between its
//! neighboring candidates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bingham::{BinghamDist, BinghamMixture, CONCENTRATION_CAP};
use crate::data::Record;
use crate::error::{Error, Result};
use crate::eval::clipped_log;

pub const LAMBDA_SEARCH_MIN: f64 = 1e-2;
pub const LAMBDA_SEARCH_MAX: f64 = CONCENTRATION_CAP;

/// Fractional part of the golden ratio.
const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section steps after the sub-random candidates.
pub const REFINE_STEPS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub lambda: f64,
    pub objective: f64,
    /// Every evaluated `(λ, objective)` in evaluation order.
    pub trials: Vec<(f64, f64)>,
}

/// Maximizes `f` over `[lo, hi]` in log space with `trials` sub-random
/// evaluations (at least 2) plus [`REFINE_STEPS`] refinement steps. Ties
/// keep the earliest evaluation.
pub fn maximize<R, F>(mut f: F, lo: f64, hi: f64, trials: usize, rng: &mut R) -> Result<TuneResult>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || trials < 2 {
        return Err(Error::InvalidParameter(format!(
            "search needs 0 < lo < hi and at least 2 trials, got [{lo}, {hi}] with {trials}"
        )));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let offset: f64 = rng.random();
    let mut points = vec![lo, hi];
    for i in 0..trials - 2 {
        let u = (offset + GOLDEN * i as f64).fract();
        points.push((a + u * (b - a)).exp());
    }
    let mut trials_out = Vec::with_capacity(points.len() + REFINE_STEPS);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    let mut eval = |p: f64, best: &mut (f64, f64), out: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = f(p)?;
        if v > best.1 {
            *best = (p, v);
        }
        out.push((p, v));
        Ok(v)
    };
    for p in points {
        eval(p, &mut best, &mut trials_out)?;
    }
    if best.0.is_nan() {
        return Err(Error::InvalidInput("objective was never finite".into()));
    }
    // bracket the best candidate by its neighbors in log space
    let lb = best.0.ln();
    let mut lo_n = a;
    let mut hi_n = b;
    for (p, _) in &trials_out {
        let l = p.ln();
        if l < lb && l > lo_n {
            lo_n = l;
        }
        if l > lb && l < hi_n {
            hi_n = l;
        }
    }
    let (mut x0, mut x3) = (lo_n, hi_n);
    let mut x1 = x3 - GOLDEN * (x3 - x0);
    let mut x2 = x0 + GOLDEN * (x3 - x0);
    let mut f1 = eval(x1.exp(), &mut best, &mut trials_out)?;
    let mut f2 = eval(x2.exp(), &mut best, &mut trials_out)?;
    for _ in 2..REFINE_STEPS {
        if f1 >= f2 {
            x3 = x2;
            x2 = x1;
            f2 = f1;
            x1 = x3 - GOLDEN * (x3 - x0);
            f1 = eval(x1.exp(), &mut best, &mut trials_out)?;
        } else {
            x0 = x1;
            x1 = x2;
            f1 = f2;
            x2 = x0 + GOLDEN * (x3 - x0);
            f2 = eval(x2.exp(), &mut best, &mut trials_out)?;
        }
    }
    Ok(TuneResult {
        lambda: best.0,
        objective: best.1,
        trials: trials_out,
    })
}

fn check_records(records: &[Record]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InsufficientData("validation set is empty".into()));
    }
    Ok(())
}

/// Mean clipped log likelihood of `q*` under an isotropic Bingham of
/// concentration `λ` centered on each base estimate.
pub fn fixed_lambda_objective(records: &[Record], lambda: f64) -> Result<f64> {
    check_records(records)?;
    let mut total = 0.0;
    for r in records {
        total += clipped_log(BinghamDist::isotropic(r.q_est, lambda)?.pdf(&r.q_true));
    }
    Ok(total / records.len() as f64)
}

/// As [`fixed_lambda_objective`] for a confidence-weighted mixture over each
/// record's candidates (falling back to the base estimate alone).
pub fn mixture_objective(records: &[Record], lambda: f64) -> Result<f64> {
    check_records(records)?;
    let mut total = 0.0;
    for r in records {
        total += clipped_log(candidate_mixture(r, lambda)?.pdf(&r.q_true));
    }
    Ok(total / records.len() as f64)
}

pub fn candidate_mixture(record: &Record, lambda: f64) -> Result<BinghamMixture> {
    let est: Vec<_> = if record.candidates.is_empty() {
        vec![(record.q_est, 1.0)]
    } else {
        record.candidates.iter().map(|c| (c.q, c.confidence)).collect()
    };
    BinghamMixture::isotropic(&est, lambda)
}

pub fn tune_fixed_lambda<R: Rng + ?Sized>(records: &[Record], trials: usize, rng: &mut R) -> Result<TuneResult> {
    check_records(records)?;
    maximize(|l| fixed_lambda_objective(records, l), LAMBDA_SEARCH_MIN, LAMBDA_SEARCH_MAX, trials, rng)
}

pub fn tune_mixture_lambda<R: Rng + ?Sized>(records: &[Record], trials: usize, rng: &mut R) -> Result<TuneResult> {
    check_records(records)?;
    maximize(|l| mixture_objective(records, l), LAMBDA_SEARCH_MIN, LAMBDA_SEARCH_MAX, trials, rng)
}
