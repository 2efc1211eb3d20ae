//! Per-seed trace files and the long-format plot table.

use std::fs::File;
use std::path::{Path, PathBuf};

use mirrorfree::mfmp::RunTrace;

use crate::error::{HarnessError, Result};

pub const TRACE_HEADER: [&str; 8] = [
    "k",
    "op_norm_half",
    "op_norm_next",
    "model_norm_next",
    "omega_to_ref",
    "e_k",
    "prox_residual_half",
    "prox_residual_next",
];

pub const TIMING_HEADER: [&str; 2] = ["k", "wall_time_s"];

pub const PLOT_HEADER: [&str; 5] = ["config", "seed", "k", "metric", "value"];

/// Metrics emitted per trace row, in order.
pub const PLOT_METRICS: [&str; 8] = [
    "op_norm_half",
    "op_norm_next",
    "log10_op_norm_next",
    "model_norm_next",
    "omega_to_ref",
    "e_k",
    "prox_residual_half",
    "prox_residual_next",
];

pub fn trace_file_name(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}.csv")
}

pub fn timing_file_name(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}.timing.csv")
}

/// Seventeen significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

/// One parsed trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub op_norm_half: f64,
    pub op_norm_next: f64,
    pub model_norm_next: f64,
    pub omega_to_ref: Option<f64>,
    pub e_k: Option<f64>,
    pub prox_residual_half: f64,
    pub prox_residual_next: f64,
}

impl TraceRow {
    fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "op_norm_half" => Some(self.op_norm_half),
            "op_norm_next" => Some(self.op_norm_next),
            "log10_op_norm_next" => Some(self.op_norm_next.log10()),
            "model_norm_next" => Some(self.model_norm_next),
            "omega_to_ref" => self.omega_to_ref,
            "e_k" => self.e_k,
            "prox_residual_half" => Some(self.prox_residual_half),
            "prox_residual_next" => Some(self.prox_residual_next),
            _ => None,
        }
    }
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

/// Writes the deterministic trace and its wall-time sidecar.
pub fn write_trace(dir: &Path, label: &str, seed: u64, trace: &RunTrace) -> Result<(PathBuf, PathBuf)> {
    let path = dir.join(trace_file_name(label, seed));
    let mut w = create(&path)?;
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        w.write_record([
            r.k.to_string(),
            fmt_real(r.op_norm_half),
            fmt_real(r.op_norm_next),
            fmt_real(r.model_norm_next),
            fmt_opt(r.omega_to_ref),
            fmt_opt(r.e_k),
            fmt_real(r.prox_residuals[0]),
            fmt_real(r.prox_residuals[1]),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;

    let timing = dir.join(timing_file_name(label, seed));
    let mut w = create(&timing)?;
    w.write_record(TIMING_HEADER)?;
    for r in &trace.records {
        w.write_record([r.k.to_string(), fmt_real(r.wall_time_s)])?;
    }
    w.flush().map_err(|e| HarnessError::io(&timing, e))?;
    Ok((path, timing))
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let corrupt = |reason: String| HarnessError::CorruptTrace {
        path: path.to_path_buf(),
        reason,
    };
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let header = rdr.headers().map_err(|e| corrupt(e.to_string()))?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(corrupt(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| corrupt(e.to_string()))?;
        let req = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .map_err(|_| corrupt(format!("row {}: bad `{}` value `{}`", i + 1, TRACE_HEADER[j], &rec[j])))
        };
        let opt = |j: usize| -> Result<Option<f64>> {
            if rec[j].is_empty() {
                Ok(None)
            } else {
                req(j).map(Some)
            }
        };
        let k = rec[0]
            .parse::<usize>()
            .map_err(|_| corrupt(format!("row {}: bad iteration index `{}`", i + 1, &rec[0])))?;
        rows.push(TraceRow {
            k,
            op_norm_half: req(1)?,
            op_norm_next: req(2)?,
            model_norm_next: req(3)?,
            omega_to_ref: opt(4)?,
            e_k: opt(5)?,
            prox_residual_half: req(6)?,
            prox_residual_next: req(7)?,
        });
    }
    Ok(rows)
}

/// Splits `<config>_seed<N>.csv` into its config label and seed.
pub fn parse_trace_name(name: &str) -> Option<(String, u64)> {
    let stem = name.strip_suffix(".csv")?;
    let (config, seed) = stem.rsplit_once("_seed")?;
    if config.is_empty() || seed.is_empty() || !seed.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((config.to_string(), seed.parse().ok()?))
}

/// Merges every trace in `dir` into a long table at `out`, sorted by
/// config then seed. Missing values are written as empty cells so each
/// trace contributes exactly `rows × metrics` lines. Returns the number of
/// data rows.
pub fn write_plotdata(dir: &Path, out: &Path) -> Result<usize> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut traces = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((config, seed)) = parse_trace_name(&name) {
            traces.push((config, seed, entry.path()));
        }
    }
    if traces.is_empty() {
        return Err(HarnessError::InvalidInput(format!(
            "no trace files in {}",
            dir.display()
        )));
    }
    traces.sort();
    let mut w = create(out)?;
    w.write_record(PLOT_HEADER)?;
    let mut n = 0;
    for (config, seed, path) in &traces {
        let seed = seed.to_string();
        for row in read_trace(path)? {
            let k = row.k.to_string();
            for metric in PLOT_METRICS {
                w.write_record([config.as_str(), &seed, &k, metric, &fmt_opt(row.metric(metric))])?;
                n += 1;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::io(out, e))?;
    Ok(n)
}
