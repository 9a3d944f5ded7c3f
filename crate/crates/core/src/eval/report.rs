//! Text and CSV reports. Every report starts with the configuration hash and
//! seed; numbers use fixed precision so identical runs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::metrics::auc;
use super::{FilterRow, RecordEval, CHANCE_DENSITY};
use crate::data::Dataset;
use crate::error::Result;

/// Printed where a metric is undefined.
pub const UNDEFINED: &str = "n/a";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportHeader {
    pub title: String,
    pub config_hash: String,
    pub seed: u64,
    pub records: usize,
}

impl ReportHeader {
    fn text(&self) -> String {
        format!(
            "# {}\n# config_hash={} seed={} records={}\n",
            self.title, self.config_hash, self.seed, self.records
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub n: usize,
    pub mean_log_likelihood: f64,
    /// Angular AUC of the distribution mode; `None` for the uniform method.
    pub auc_angle: Option<f64>,
    /// ADD / ADD-S AUC of the mode; `None` without model points.
    pub auc_add: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    /// Per object id, in id order.
    pub objects: BTreeMap<String, GroupSummary>,
    pub all: GroupSummary,
}

fn group(evals: &[&RecordEval], auc_angle_max_deg: f64, auc_add_max: f64) -> Result<GroupSummary> {
    let n = evals.len();
    let mean_log_likelihood = evals.iter().map(|e| e.log_likelihood).sum::<f64>() / n as f64;
    let angles: Vec<f64> = evals.iter().filter_map(|e| e.mode_angle_deg).collect();
    let adds: Vec<f64> = evals.iter().filter_map(|e| e.mode_add).collect();
    Ok(GroupSummary {
        n,
        mean_log_likelihood,
        auc_angle: if angles.is_empty() { None } else { Some(auc(&angles, auc_angle_max_deg)?) },
        auc_add: if adds.is_empty() { None } else { Some(auc(&adds, auc_add_max)?) },
    })
}

/// Aggregates per-record results of one method, per object and overall.
pub fn summarize(ds: &Dataset, method: &str, evals: &[RecordEval], auc_angle_max_deg: f64, auc_add_max: f64) -> Result<MethodSummary> {
    let mut by: BTreeMap<String, Vec<&RecordEval>> = BTreeMap::new();
    for (r, e) in ds.records.iter().zip(evals) {
        by.entry(r.object.clone()).or_default().push(e);
    }
    let mut objects = BTreeMap::new();
    for (id, es) in &by {
        objects.insert(id.clone(), group(es, auc_angle_max_deg, auc_add_max)?);
    }
    let all: Vec<&RecordEval> = evals.iter().collect();
    Ok(MethodSummary {
        method: method.into(),
        objects,
        all: group(&all, auc_angle_max_deg, auc_add_max)?,
    })
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:.prec$}"))
}

fn row_labels(summaries: &[MethodSummary]) -> Vec<String> {
    let mut labels: Vec<String> = summaries
        .first()
        .map(|s| s.objects.keys().cloned().collect())
        .unwrap_or_default();
    labels.push("all".into());
    labels
}

fn cell<'a>(s: &'a MethodSummary, label: &str) -> Option<&'a GroupSummary> {
    if label == "all" {
        Some(&s.all)
    } else {
        s.objects.get(label)
    }
}

fn aligned(header: &ReportHeader, columns: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = columns.iter().map(|c| c.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        s.push('\n');
        s
    };
    let mut out = header.text();
    out.push_str(&line(columns));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn csv(header: &ReportHeader, columns: &[String], rows: &[Vec<String>]) -> String {
    let mut out = header.text();
    out.push_str(&columns.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn likelihood_cells(summaries: &[MethodSummary]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut cols = vec!["object".to_string()];
    cols.extend(summaries.iter().map(|s| s.method.clone()));
    let rows = row_labels(summaries)
        .into_iter()
        .map(|label| {
            let mut r = vec![label.clone()];
            r.extend(summaries.iter().map(|s| opt(cell(s, &label).map(|g| g.mean_log_likelihood), 4)));
            r
        })
        .collect();
    (cols, rows)
}

/// Mean ground-truth log likelihood: rows are objects, columns methods.
pub fn likelihood_table_text(header: &ReportHeader, summaries: &[MethodSummary]) -> String {
    let (c, r) = likelihood_cells(summaries);
    aligned(header, &c, &r)
}

pub fn likelihood_table_csv(header: &ReportHeader, summaries: &[MethodSummary]) -> String {
    let (c, r) = likelihood_cells(summaries);
    csv(header, &c, &r)
}

fn auc_cells(summaries: &[MethodSummary], auc_angle_max_deg: f64, auc_add_max: f64) -> (Vec<String>, Vec<Vec<String>>) {
    let mut cols = vec!["object".to_string()];
    for s in summaries {
        cols.push(format!("{}:auc_angle@{auc_angle_max_deg}deg", s.method));
        cols.push(format!("{}:auc_add@{auc_add_max}m", s.method));
    }
    let rows = row_labels(summaries)
        .into_iter()
        .map(|label| {
            let mut r = vec![label.clone()];
            for s in summaries {
                let g = cell(s, &label);
                r.push(opt(g.and_then(|g| g.auc_angle), 4));
                r.push(opt(g.and_then(|g| g.auc_add), 4));
            }
            r
        })
        .collect();
    (cols, rows)
}

/// AUC of the distribution mode's angular and ADD / ADD-S errors.
pub fn auc_table_text(header: &ReportHeader, summaries: &[MethodSummary], auc_angle_max_deg: f64, auc_add_max: f64) -> String {
    let (c, r) = auc_cells(summaries, auc_angle_max_deg, auc_add_max);
    aligned(header, &c, &r)
}

pub fn auc_table_csv(header: &ReportHeader, summaries: &[MethodSummary], auc_angle_max_deg: f64, auc_add_max: f64) -> String {
    let (c, r) = auc_cells(summaries, auc_angle_max_deg, auc_add_max);
    csv(header, &c, &r)
}

fn filter_cells(tables: &[(String, Vec<FilterRow>)]) -> (Vec<String>, Vec<Vec<String>>) {
    let cols = ["method", "multiplier", "threshold", "retained", "reject_pct", "mean_angle_deg", "mean_add_m"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for (method, t) in tables {
        for r in t {
            rows.push(vec![
                method.clone(),
                format!("{}", r.multiplier),
                format!("{:.4}", r.threshold),
                r.retained.to_string(),
                format!("{:.2}", r.reject_pct),
                opt(r.mean_angle_deg, 3),
                opt(r.mean_add, 5),
            ]);
        }
    }
    (cols, rows)
}

/// Retained-set metrics per likelihood threshold (multiples of chance).
pub fn filter_table_text(header: &ReportHeader, tables: &[(String, Vec<FilterRow>)]) -> String {
    let (c, r) = filter_cells(tables);
    let mut out = aligned(header, &c, &r);
    let _ = writeln!(out, "# chance density = {CHANCE_DENSITY:.3}");
    out
}

pub fn filter_table_csv(header: &ReportHeader, tables: &[(String, Vec<FilterRow>)]) -> String {
    let (c, r) = filter_cells(tables);
    csv(header, &c, &r)
}
