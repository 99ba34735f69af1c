use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::{Error, Result};

/// Travel times of one method on one test distribution under one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub method: Method,
    pub label: String,
    pub seed: u64,
    /// Per-flow average travel time, seconds.
    pub att: Vec<f64>,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    /// Mean free-flow travel time of the distribution's flows.
    pub free_flow: f64,
    /// Set when the (method, seed) cell failed.
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn new(method: Method, label: &str, seed: u64, att: Vec<f64>, free_flow: f64) -> Self {
        let (max, min, mean) = summarize(&att);
        ResultRecord {
            method,
            label: label.to_string(),
            seed,
            att,
            max,
            min,
            mean,
            free_flow,
            error: None,
        }
    }

    pub fn failed(method: Method, label: &str, seed: u64, free_flow: f64, error: String) -> Self {
        ResultRecord {
            error: Some(error),
            ..Self::new(method, label, seed, Vec::new(), free_flow)
        }
    }
}

fn summarize(att: &[f64]) -> (f64, f64, f64) {
    if att.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let max = att.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = att.iter().copied().fold(f64::INFINITY, f64::min);
    (max, min, att.iter().sum::<f64>() / att.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Improvement {
    /// `(baseline − ours)/baseline`, percent.
    pub raw: f64,
    /// `(baseline − ours)/(baseline − free flow)`, percent.
    pub relative: f64,
}

pub fn relative_improvement(baseline: f64, ours: f64, free_flow: f64) -> Result<Improvement> {
    if !(baseline > free_flow) {
        return Err(Error::invalid(format!(
            "baseline {baseline} must exceed the free-flow time {free_flow}"
        )));
    }
    if !(ours >= free_flow) {
        return Err(Error::invalid(format!(
            "travel time {ours} is below the free-flow time {free_flow}"
        )));
    }
    let gain = baseline - ours;
    Ok(Improvement {
        raw: 100.0 * gain / baseline,
        relative: 100.0 * gain / (baseline - free_flow),
    })
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    method: String,
    distribution: String,
    seed: u64,
    max: f64,
    min: f64,
    mean: f64,
    free_flow: f64,
    /// `;`-separated per-flow values.
    att: String,
    error: String,
}

pub fn records_to_csv(records: &[ResultRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(CsvRow {
            method: r.method.to_string(),
            distribution: r.label.clone(),
            seed: r.seed,
            max: r.max,
            min: r.min,
            mean: r.mean,
            free_flow: r.free_flow,
            att: r.att.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            error: r.error.clone().unwrap_or_default(),
        })
        .map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn records_from_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rd.deserialize::<CsvRow>() {
        let row = row.map_err(|e| Error::parse("results csv", e.to_string()))?;
        let att = if row.att.is_empty() {
            Vec::new()
        } else {
            row.att
                .split(';')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::parse("results csv", format!("`{v}`: {e}")))
                })
                .collect::<Result<_>>()?
        };
        out.push(ResultRecord {
            method: row.method.parse()?,
            label: row.distribution,
            seed: row.seed,
            att,
            max: row.max,
            min: row.min,
            mean: row.mean,
            free_flow: row.free_flow,
            error: (!row.error.is_empty()).then_some(row.error),
        });
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    records_from_csv(&text)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub name: String,
    pub cells: Vec<Option<f64>>,
}

/// Rows are methods (then improvement rows); columns are (max, min, mean)
/// per distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub distributions: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["method".to_string()];
        for d in &self.distributions {
            for stat in ["max", "min", "mean"] {
                h.push(format!("{d} {stat}"));
            }
        }
        h
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::invalid(e.to_string());
        w.write_record(self.header()).map_err(err)?;
        for r in &self.rows {
            let mut rec = vec![r.name.clone()];
            rec.extend(r.cells.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(rec).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_text(&self) -> String {
        let header = self.header();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let suffix = if r.name.starts_with("improvement") { "%" } else { "" };
                let mut v = vec![r.name.clone()];
                v.extend(r.cells.iter().map(|c| match c {
                    Some(x) => format!("{x:.1}{suffix}"),
                    None => "-".into(),
                }));
                v
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|r| r[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&body) {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        format!("{c:<w$}", w = widths[i])
                    } else {
                        format!("{c:>w$}", w = widths[i])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

/// Travel times pooled over seeds, successful cells only.
fn pooled(records: &[ResultRecord], method: Method, label: &str) -> Option<(f64, f64, f64)> {
    let att: Vec<f64> = records
        .iter()
        .filter(|r| r.method == method && r.label == label && r.error.is_none())
        .flat_map(|r| r.att.iter().copied())
        .collect();
    (!att.is_empty()).then(|| summarize(&att))
}

fn free_flow(records: &[ResultRecord], label: &str) -> Option<f64> {
    records.iter().find(|r| r.label == label).map(|r| r.free_flow)
}

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// The method other than `ours` with the lowest pooled mean on `label`,
/// ties broken by name.
pub fn best_baseline(records: &[ResultRecord], label: &str, ours: Method) -> Option<Method> {
    let mut scored: Vec<(f64, Method)> = first_seen(records.iter().map(|r| r.method))
        .into_iter()
        .filter(|&m| m != ours)
        .filter_map(|m| pooled(records, m, label).map(|(_, _, mean)| (mean, m)))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.name().cmp(b.1.name())));
    scored.first().map(|&(_, m)| m)
}

pub fn report_table(records: &[ResultRecord]) -> Result<Table> {
    if records.is_empty() {
        return Err(Error::invalid("no records to tabulate"));
    }
    let distributions: Vec<String> = first_seen(records.iter().map(|r| r.label.clone()));
    let methods: Vec<Method> = first_seen(records.iter().map(|r| r.method));
    let mut rows: Vec<TableRow> = methods
        .iter()
        .map(|&m| TableRow {
            name: m.to_string(),
            cells: distributions
                .iter()
                .flat_map(|d| match pooled(records, m, d) {
                    Some((max, min, mean)) => [Some(max), Some(min), Some(mean)],
                    None => [None; 3],
                })
                .collect(),
        })
        .collect();

    let ours = Method::GeneraLight;
    if methods.contains(&ours) && methods.len() > 1 {
        let mut raw = Vec::new();
        let mut rel = Vec::new();
        for d in &distributions {
            let cells: [Option<Improvement>; 3] = (|| {
                let base = best_baseline(records, d, ours)?;
                let b = pooled(records, base, d)?;
                let o = pooled(records, ours, d)?;
                let ff = free_flow(records, d)?;
                let pick = |x: f64, y: f64| relative_improvement(x, y, ff).ok();
                Some([pick(b.0, o.0), pick(b.1, o.1), pick(b.2, o.2)])
            })()
            .unwrap_or([None; 3]);
            raw.extend(cells.iter().map(|c| c.map(|i| i.raw)));
            rel.extend(cells.iter().map(|c| c.map(|i| i.relative)));
        }
        rows.push(TableRow {
            name: "improvement (raw)".into(),
            cells: raw,
        });
        rows.push(TableRow {
            name: "improvement (relative)".into(),
            cells: rel,
        });
    }
    Ok(Table { distributions, rows })
}

/// Failed (method, seed) cells with the number of records they affect.
pub(crate) fn failures(records: &[ResultRecord]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in records.iter().filter(|r| r.error.is_some()) {
        *m.entry(format!("{} seed {}", r.method, r.seed)).or_insert(0) += 1;
    }
    m
}
