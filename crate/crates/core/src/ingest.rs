//! CSV time-series ingestion: `date,NODE1,NODE2,...` with one row per sample.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Named, time-ordered graph signals.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalStream {
    node_names: Vec<String>,
    timestamps: Vec<String>,
    values: Vec<Vec<f64>>,
}

/// Integer stamps compare numerically, everything else (ISO-8601 dates) lexicographically.
fn compare_stamps(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

impl SignalStream {
    pub fn new(node_names: Vec<String>, timestamps: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if node_names.is_empty() {
            return invalid("stream needs at least one node");
        }
        if timestamps.len() != values.len() {
            return invalid(format!("{} timestamps for {} samples", timestamps.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| v.len() != node_names.len()) {
            return invalid(format!(
                "sample {} has {} values, expected {}",
                timestamps[i],
                values[i].len(),
                node_names.len()
            ));
        }
        if let Some(w) = timestamps.windows(2).find(|w| compare_stamps(&w[0], &w[1]) != Ordering::Less) {
            return invalid(format!("timestamps not strictly increasing: {} then {}", w[0], w[1]));
        }
        Ok(Self { node_names, timestamps, values })
    }

    /// Integer timestamps `1..=T` with nodes named `1..=N`.
    pub fn from_samples(values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.first().map_or(0, Vec::len);
        let names = (1..=n).map(|i| i.to_string()).collect();
        let stamps = (1..=values.len()).map(|t| t.to_string()).collect();
        Self::new(names, stamps, values)
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn n_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W, time_header: &str) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(std::iter::once(time_header).chain(self.node_names.iter().map(String::as_str)))?;
        for (stamp, row) in self.timestamps.iter().zip(&self.values) {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(stamp.clone());
            rec.extend(row.iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?, "date")
    }
}

/// A parsed CSV plus the 1-based data rows that were skipped.
#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub stream: SignalStream,
    pub dropped_rows: Vec<usize>,
}

pub fn read_csv<R: Read>(input: R) -> Result<CsvLoad> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = rd
        .headers()
        .map_err(|e| Error::Input(format!("unparsable header: {e}")))?
        .clone();
    if header.len() < 2 || header.iter().all(str::is_empty) {
        return Err(Error::Input(format!("need a time column and at least one node column, got {} columns", header.len())));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut stamps = Vec::new();
    let mut values = Vec::new();
    let mut dropped_rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Input(format!("row {row}: {e}")))?;
        let parsed: Option<Vec<f64>> = if rec.len() == header.len() {
            rec.iter()
                .skip(1)
                .map(|c| c.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect()
        } else {
            None
        };
        match parsed {
            Some(v) => {
                stamps.push(rec[0].trim().to_string());
                values.push(v);
            }
            None => {
                log::warn!("dropping row {row}: missing or non-numeric value");
                dropped_rows.push(row);
            }
        }
    }
    if !dropped_rows.is_empty() {
        log::warn!("dropped {} of {} rows", dropped_rows.len(), dropped_rows.len() + values.len());
    }
    let stream = SignalStream::new(names, stamps, values).map_err(|e| Error::Input(e.to_string()))?;
    Ok(CsvLoad { stream, dropped_rows })
}

pub fn load_csv(path: &Path) -> Result<CsvLoad> {
    let file = File::open(path).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file)
}

/// Entry-wise natural log.
pub fn log_transform(s: &SignalStream) -> Result<SignalStream> {
    let mut values = Vec::with_capacity(s.len());
    for (stamp, row) in s.timestamps.iter().zip(&s.values) {
        let mut out = Vec::with_capacity(row.len());
        for (name, v) in s.node_names.iter().zip(row) {
            if *v <= 0.0 {
                return invalid(format!("non-positive value {v} at {stamp}, column {name}"));
            }
            out.push(v.ln());
        }
        values.push(out);
    }
    Ok(SignalStream { values, ..s.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Returns {
    /// `(p_t - p_{t-1}) / p_{t-1}`.
    #[default]
    Simple,
    /// `ln p_t - ln p_{t-1}`.
    Log,
}

/// Single-step relative changes; the output is one sample shorter and keeps the later timestamp.
pub fn discrete_gradient(s: &SignalStream, kind: Returns) -> Result<SignalStream> {
    if s.len() < 2 {
        return invalid(format!("discrete gradient needs at least 2 samples, got {}", s.len()));
    }
    let mut values = Vec::with_capacity(s.len() - 1);
    for (t, pair) in s.values.windows(2).enumerate() {
        let mut row = Vec::with_capacity(s.n_nodes());
        for ((name, prev), cur) in s.node_names.iter().zip(&pair[0]).zip(&pair[1]) {
            if *prev == 0.0 {
                return invalid(format!("zero value at {}, column {name}", s.timestamps[t]));
            }
            row.push(match kind {
                Returns::Simple => (cur - prev) / prev,
                Returns::Log => {
                    if *prev < 0.0 || *cur <= 0.0 {
                        return invalid(format!("log returns need positive values near {}, column {name}", s.timestamps[t + 1]));
                    }
                    (cur / prev).ln()
                }
            });
        }
        values.push(row);
    }
    Ok(SignalStream {
        node_names: s.node_names.clone(),
        timestamps: s.timestamps[1..].to_vec(),
        values,
    })
}
