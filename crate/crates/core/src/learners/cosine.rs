//! Cosine feature difference: histogram values are the cosine similarity of
//! the query feature with each vertex's reference feature, clamped at zero.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{check_feature, ReferenceTables};
use crate::data::features::FEATURE_DIM;
use crate::data::Record;
use crate::error::{Error, Result};
use crate::grid::S3Grid;
use crate::histogram::GriddedHistogram;
use crate::symmetry::SymmetrySpec;

/// `max(0, a·b / (‖a‖‖b‖))`.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::InvalidInput("cosine score of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

#[derive(Clone, Debug)]
pub struct CosineHistogram {
    grid: Arc<S3Grid>,
    k: usize,
    refs: ReferenceTables,
}

impl CosineHistogram {
    pub fn new(grid: Arc<S3Grid>, k: usize, objects: &BTreeMap<String, SymmetrySpec>) -> Result<Self> {
        let refs = ReferenceTables::build(&grid, objects)?;
        Ok(CosineHistogram { grid, k, refs })
    }

    pub fn scores(&self, record: &Record) -> Result<Vec<f64>> {
        check_feature(record, FEATURE_DIM)?;
        let table = self.refs.get(&record.object)?;
        table
            .rows()
            .into_iter()
            .map(|row| cosine_score(row.as_slice().expect("standard layout"), &record.feature))
            .collect()
    }

    pub fn histogram(&self, record: &Record) -> Result<GriddedHistogram> {
        GriddedHistogram::new(self.grid.clone(), self.scores(record)?, self.k)
    }
}
