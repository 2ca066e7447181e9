//! Result rows, CSV I/O and per-cell aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use dmvi_core::Method;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{BenchError, Result};

/// One run. Solver fields are empty for the baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub model: String,
    #[serde(serialize_with = "ser_method", deserialize_with = "de_method")]
    pub method: Method,
    pub n_data: usize,
    pub n_diff: Option<usize>,
    pub n_steps: Option<usize>,
    pub n_order: Option<usize>,
    pub seed: u64,
    pub t_train_s: f64,
    pub t_sample_s: f64,
    pub mse: f64,
}

fn ser_method<S: Serializer>(m: &Method, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(m.as_str())
}

fn de_method<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Method, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

pub const CSV_HEADER: &str = "model,method,n_data,n_diff,n_steps,n_order,seed,t_train_s,t_sample_s,mse";

pub fn write_csv<W: Write>(rows: &[BenchmarkRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<BenchmarkRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(BenchError::Config(format!("unexpected CSV header `{}`", header.join(","))));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(BenchError::from))
        .collect()
}

/// Grouping key: everything except seed and measurements.
pub type CellKey = (String, Method, usize, Option<usize>, Option<usize>, Option<usize>);

/// Replicate means of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub key: CellKey,
    pub replicates: usize,
    pub t_train_s: f64,
    pub t_sample_s: f64,
    pub mse: f64,
}

/// Per-cell means over replicates, ordered by key.
pub fn aggregate(rows: &[BenchmarkRow]) -> Result<Vec<Aggregate>> {
    if rows.is_empty() {
        return Err(BenchError::Config("nothing to aggregate".into()));
    }
    let mut groups: BTreeMap<CellKey, Vec<&BenchmarkRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.model.clone(), r.method, r.n_data, r.n_diff, r.n_steps, r.n_order);
        groups.entry(key).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(key, rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&BenchmarkRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            Aggregate {
                key,
                replicates: rs.len(),
                t_train_s: mean(|r| r.t_train_s),
                t_sample_s: mean(|r| r.t_sample_s),
                mse: mean(|r| r.mse),
            }
        })
        .collect())
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

/// Plain-text table grouped by model and data size, one line per method
/// and solver setting.
pub fn summary_table(aggregates: &[Aggregate]) -> String {
    let mut out = String::new();
    let mut current: Option<(&str, usize)> = None;
    for a in aggregates {
        let (model, method, n, n_diff, n_steps, n_order) = &a.key;
        if current != Some((model.as_str(), *n)) {
            current = Some((model.as_str(), *n));
            let _ = writeln!(out, "\n{model}  N={n}");
            let _ = writeln!(
                out,
                "  {:<6} {:>4} {:>4} {:>4} {:>4} {:>12} {:>12} {:>12}",
                "method", "N_d", "N_s", "N_o", "reps", "T_train[s]", "T_sample[s]", "MSE"
            );
        }
        let _ = writeln!(
            out,
            "  {:<6} {:>4} {:>4} {:>4} {:>4} {:>12.3} {:>12.3} {:>12.4}",
            method.as_str(),
            opt(*n_diff),
            opt(*n_steps),
            opt(*n_order),
            a.replicates,
            a.t_train_s,
            a.t_sample_s,
            a.mse
        );
    }
    out
}
