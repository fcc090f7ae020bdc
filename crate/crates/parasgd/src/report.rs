//! CSV emission and parsing for traces, heatmaps and overhead curves.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! an emitted file reproduces the values bit for bit.

use std::path::Path;

use parasgd_core::analysis::{OverheadPoint, SweepGrid};
use parasgd_core::schemes::{RunTrace, Scheme};

use crate::error::{CliError, Result};

pub const TRACE_HEADER: [&str; 9] =
    ["scheme", "K", "tau", "b", "round", "serial_iters", "parallel_iters", "sim_time", "accuracy"];
pub const HEATMAP_HEADER: [&str; 6] = ["K", "tau", "N_a", "M_a", "speedup", "reached"];
pub const OVERHEAD_HEADER: [&str; 4] = ["S", "naive_speedup", "sparknet_speedup", "best_tau"];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub scheme: Scheme,
    pub k: usize,
    pub tau: u64,
    pub b: usize,
    pub round: u64,
    pub serial_iters: u64,
    pub parallel_iters: u64,
    pub sim_time: f64,
    pub accuracy: f64,
}

impl TraceRow {
    pub fn from_trace(trace: &RunTrace) -> Vec<TraceRow> {
        let p = &trace.params;
        trace
            .records
            .iter()
            .map(|r| TraceRow {
                scheme: p.scheme,
                k: p.k,
                tau: p.tau,
                b: p.b,
                round: r.rounds,
                serial_iters: r.serial_iters,
                parallel_iters: r.parallel_iters,
                sim_time: r.sim_time,
                accuracy: r.accuracy,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapRow {
    pub k: usize,
    pub tau: u64,
    pub n_a: u64,
    pub m_a: Option<u64>,
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub s: f64,
    pub naive: f64,
    pub sparknet: Option<f64>,
    pub best_tau: Option<u64>,
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<std::fs::File>> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e.to_string()))?;
    w.write_record(header).map_err(|e| CliError::format(path, e.to_string()))?;
    Ok(w)
}

fn finish(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn put(path: &Path, w: &mut csv::Writer<std::fs::File>, fields: &[String]) -> Result<()> {
    w.write_record(fields).map_err(|e| CliError::format(path, e.to_string()))
}

fn opt<T: ToString>(v: Option<T>, missing: &str) -> String {
    v.map_or_else(|| missing.to_string(), |v| v.to_string())
}

pub fn write_traces(path: &Path, traces: &[RunTrace]) -> Result<()> {
    let mut w = writer(path, &TRACE_HEADER)?;
    for row in traces.iter().flat_map(TraceRow::from_trace) {
        let fields = [
            row.scheme.name().to_string(),
            row.k.to_string(),
            row.tau.to_string(),
            row.b.to_string(),
            row.round.to_string(),
            row.serial_iters.to_string(),
            row.parallel_iters.to_string(),
            row.sim_time.to_string(),
            row.accuracy.to_string(),
        ];
        put(path, &mut w, &fields)?;
    }
    finish(path, w)
}

/// Unreached cells have `M_a = inf`, an empty speedup and `reached = false`.
pub fn write_heatmap(path: &Path, grid: &SweepGrid) -> Result<()> {
    let mut w = writer(path, &HEATMAP_HEADER)?;
    for p in &grid.points {
        let fields = [
            p.k.to_string(),
            p.tau.to_string(),
            p.n_a.to_string(),
            opt(p.m_a, "inf"),
            opt(p.speedup(), ""),
            p.reached().to_string(),
        ];
        put(path, &mut w, &fields)?;
    }
    finish(path, w)
}

pub fn write_overhead(path: &Path, points: &[OverheadPoint]) -> Result<()> {
    let mut w = writer(path, &OVERHEAD_HEADER)?;
    for p in points {
        let fields = [p.s.to_string(), p.naive.to_string(), opt(p.sparknet, ""), opt(p.best_tau, "")];
        put(path, &mut w, &fields)?;
    }
    finish(path, w)
}

fn rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e.to_string()))?;
    let found = r.headers().map_err(|e| CliError::format(path, e.to_string()))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::format(path, format!("unexpected header {found:?}")));
    }
    r.records()
        .map(|rec| rec.map_err(|e| CliError::format(path, e.to_string())))
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec[i]
        .parse()
        .map_err(|_| CliError::format(path, format!("bad {name} {:?}", &rec[i])))
}

fn opt_field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize, name: &str, missing: &str) -> Result<Option<T>> {
    if &rec[i] == missing {
        Ok(None)
    } else {
        field(path, rec, i, name).map(Some)
    }
}

pub fn read_traces(path: &Path) -> Result<Vec<TraceRow>> {
    rows(path, &TRACE_HEADER)?
        .iter()
        .map(|rec| {
            Ok(TraceRow {
                scheme: rec[0].parse().map_err(|_| CliError::format(path, format!("bad scheme {:?}", &rec[0])))?,
                k: field(path, rec, 1, "K")?,
                tau: field(path, rec, 2, "tau")?,
                b: field(path, rec, 3, "b")?,
                round: field(path, rec, 4, "round")?,
                serial_iters: field(path, rec, 5, "serial_iters")?,
                parallel_iters: field(path, rec, 6, "parallel_iters")?,
                sim_time: field(path, rec, 7, "sim_time")?,
                accuracy: field(path, rec, 8, "accuracy")?,
            })
        })
        .collect()
}

pub fn read_heatmap(path: &Path) -> Result<Vec<HeatmapRow>> {
    rows(path, &HEATMAP_HEADER)?
        .iter()
        .map(|rec| {
            Ok(HeatmapRow {
                k: field(path, rec, 0, "K")?,
                tau: field(path, rec, 1, "tau")?,
                n_a: field(path, rec, 2, "N_a")?,
                m_a: opt_field(path, rec, 3, "M_a", "inf")?,
                speedup: opt_field(path, rec, 4, "speedup", "")?,
            })
        })
        .collect()
}

pub fn read_overhead(path: &Path) -> Result<Vec<OverheadRow>> {
    rows(path, &OVERHEAD_HEADER)?
        .iter()
        .map(|rec| {
            Ok(OverheadRow {
                s: field(path, rec, 0, "S")?,
                naive: field(path, rec, 1, "naive_speedup")?,
                sparknet: opt_field(path, rec, 2, "sparknet_speedup", "")?,
                best_tau: opt_field(path, rec, 3, "best_tau", "")?,
            })
        })
        .collect()
}
