//! Datasets of orientation-estimation records, stored as JSON lines: one
//! header object, then one record per line.

pub mod features;
pub mod synth;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::quat::UnitQuaternion;
use crate::symmetry::SymmetrySpec;

pub const DATASET_FORMAT: &str = "orientdist-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub symmetry: SymmetrySpec,
    /// Model points in meters, for ADD / ADD-S.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_points: Option<Vec<[f64; 3]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub q: UnitQuaternion,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub object: String,
    pub q_true: UnitQuaternion,
    pub q_est: UnitQuaternion,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<Candidate>,
    pub feature: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_true: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_est: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_model: Option<String>,
    pub objects: Vec<ObjectSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: Header,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn new(objects: Vec<ObjectSpec>, feature_dim: usize, feature_model: Option<String>, records: Vec<Record>) -> Result<Self> {
        let ds = Dataset {
            header: Header {
                format: DATASET_FORMAT.into(),
                version: DATASET_VERSION,
                feature_dim,
                feature_model,
                objects,
            },
            records,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn object(&self, id: &str) -> Option<&ObjectSpec> {
        self.header.objects.iter().find(|o| o.id == id)
    }

    /// Symmetry of the record's object.
    pub fn symmetry(&self, record: &Record) -> &SymmetrySpec {
        self.object(&record.object).map(|o| &o.symmetry).unwrap_or(&SymmetrySpec::None)
    }

    pub fn feature_dim(&self) -> usize {
        self.header.feature_dim
    }

    /// Same header, subset of records.
    pub fn with_records(&self, records: Vec<Record>) -> Dataset {
        Dataset {
            header: self.header.clone(),
            records,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeMap::new();
        for o in &self.header.objects {
            if ids.insert(o.id.as_str(), ()).is_some() {
                return Err(Error::InvalidInput(format!("duplicate object id `{}`", o.id)));
            }
            o.symmetry.validate()?;
        }
        for (i, r) in self.records.iter().enumerate() {
            check_record(i, r, &self.header, &ids)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("dataset file is empty".into()))??;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| Error::InvalidInput(format!("dataset header: {e}")))?;
        if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported dataset format {} v{}",
                header.format, header.version
            )));
        }
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let index = records.len();
            let value: Value = serde_json::from_str(&line)
                .map_err(|e| Error::parse(index, "<line>", e.to_string()))?;
            records.push(parse_record(index, &value)?);
        }
        let ds = Dataset { header, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        serde_json::to_writer(&mut *w, &self.header)?;
        writeln!(w)?;
        for r in &self.records {
            serde_json::to_writer(&mut *w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_record(i: usize, r: &Record, header: &Header, ids: &BTreeMap<&str, ()>) -> Result<()> {
    if !ids.contains_key(r.object.as_str()) {
        return Err(Error::parse(i, "object", format!("unknown object id `{}`", r.object)));
    }
    if r.feature.len() != header.feature_dim {
        return Err(Error::parse(
            i,
            "feature",
            format!("expected {} components, got {}", header.feature_dim, r.feature.len()),
        ));
    }
    if r.feature.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(i, "feature", "non-finite component"));
    }
    for (j, c) in r.candidates.iter().enumerate() {
        if !c.confidence.is_finite() || c.confidence < 0.0 {
            return Err(Error::parse(i, &format!("candidates[{j}].confidence"), "must be finite and >= 0"));
        }
    }
    Ok(())
}

fn field<'a>(index: usize, v: &'a Value, name: &str) -> Result<&'a Value> {
    v.get(name).ok_or_else(|| Error::parse(index, name, "missing"))
}

fn parse_quat(index: usize, name: &str, v: &Value) -> Result<UnitQuaternion> {
    let arr: [f64; 4] = serde_json::from_value(v.clone())
        .map_err(|_| Error::parse(index, name, "expected [w, x, y, z]"))?;
    UnitQuaternion::from_unit_array(arr).map_err(|e| Error::parse(index, name, e.to_string()))
}

fn parse_vec3(index: usize, name: &str, v: Option<&Value>) -> Result<Option<[f64; 3]>> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|_| Error::parse(index, name, "expected [x, y, z]")),
    }
}

/// Field-by-field parsing so errors name the offending field.
fn parse_record(index: usize, v: &Value) -> Result<Record> {
    let object = field(index, v, "object")?
        .as_str()
        .ok_or_else(|| Error::parse(index, "object", "expected a string"))?
        .to_string();
    let q_true = parse_quat(index, "q_true", field(index, v, "q_true")?)?;
    let q_est = parse_quat(index, "q_est", field(index, v, "q_est")?)?;
    let feature: Vec<f64> = serde_json::from_value(field(index, v, "feature")?.clone())
        .map_err(|_| Error::parse(index, "feature", "expected an array of numbers"))?;
    let mut candidates = Vec::new();
    if let Some(list) = v.get("candidates") {
        let list = list
            .as_array()
            .ok_or_else(|| Error::parse(index, "candidates", "expected an array"))?;
        for (j, c) in list.iter().enumerate() {
            let name = format!("candidates[{j}].q");
            let q = parse_quat(index, &name, field(index, c, "q").map_err(|_| Error::parse(index, &name, "missing"))?)?;
            let confidence = c
                .get("confidence")
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::parse(index, &format!("candidates[{j}].confidence"), "expected a number"))?;
            candidates.push(Candidate { q, confidence });
        }
    }
    Ok(Record {
        object,
        q_true,
        q_est,
        candidates,
        feature,
        t_true: parse_vec3(index, "t_true", v.get("t_true"))?,
        t_est: parse_vec3(index, "t_est", v.get("t_est"))?,
    })
}
