//! Closed-form speedups and the sweep drivers built on run traces.
//!
//! With `N_a` serial iterations and `M_a` averaging rounds to reach accuracy
//! `a`:
//!
//! ```text
//! naive speedup     C(b) / (C(b)/K + S)                 ≤ C(b)/S
//! sparknet speedup  N_a·C(b) / ((τ·C(b) + S) · M_a)
//! zero overhead     N_a / (τ · M_a)                     (S = 0)
//! ```

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::schemes::{
    run_serial_experiment, run_sparknet, CostModel, Executor, Experiment, RunOptions, RunTrace, Sequential,
    SparkNetConfig,
};

/// The paper-default τ set for the overhead sweep.
pub const DEFAULT_TAUS: [u64; 9] = [1, 2, 5, 10, 25, 100, 500, 1000, 2500];

/// Evaluated as `C·K / (C + K·S)`, which is exactly `K` at `S = 0` when
/// `C = 1`.
pub fn naive_speedup(c_b: f64, k: usize, s: f64) -> f64 {
    let k = k as f64;
    c_b * k / (c_b + k * s)
}

pub fn sparknet_speedup(n_a: f64, c_b: f64, tau: f64, s: f64, m_a: f64) -> f64 {
    n_a * c_b / ((tau * c_b + s) * m_a)
}

/// Maximizes [`sparknet_speedup`] over `(τ, M_a)` records; unreached
/// records (`None`) are skipped, ties go to the smaller τ.
pub fn best_tau_speedup(records: &[(u64, Option<u64>)], n_a: u64, c_b: f64, s: f64) -> Option<(u64, f64)> {
    let mut best: Option<(u64, f64)> = None;
    for &(tau, m_a) in records {
        let Some(m_a) = m_a else { continue };
        let v = sparknet_speedup(n_a as f64, c_b, tau as f64, s, m_a as f64);
        best = match best {
            Some((bt, bv)) if bv > v || (bv == v && bt <= tau) => Some((bt, bv)),
            _ => Some((tau, v)),
        };
    }
    best
}

/// One grid cell, with the raw quantities its speedup is computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupPoint {
    pub k: usize,
    pub tau: u64,
    pub s: f64,
    pub c_b: f64,
    pub n_a: u64,
    /// `None`: the run never reached the target (M_a = ∞).
    pub m_a: Option<u64>,
}

impl SpeedupPoint {
    pub fn reached(&self) -> bool {
        self.m_a.is_some()
    }

    pub fn speedup(&self) -> Option<f64> {
        self.m_a
            .map(|m| sparknet_speedup(self.n_a as f64, self.c_b, self.tau as f64, self.s, m as f64))
    }
}

/// Cells keyed by `(K, τ)`; K-major in the order of the axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub ks: Vec<usize>,
    pub taus: Vec<u64>,
    pub target: f64,
    pub n_a: u64,
    pub points: Vec<SpeedupPoint>,
}

impl SweepGrid {
    pub fn cell(&self, k: usize, tau: u64) -> Option<&SpeedupPoint> {
        self.points.iter().find(|p| p.k == k && p.tau == tau)
    }

    pub fn row(&self, k: usize) -> Vec<SpeedupPoint> {
        self.points.iter().filter(|p| p.k == k).copied().collect()
    }
}

/// How the target accuracy `a` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetRule {
    Fixed(f64),
    /// Median accuracy of the serial baseline's evaluations in
    /// `(at - window, at]`.
    Calibrated { at: u64, window: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Iteration budget for a fixed target; ignored when calibrating.
    pub budget: u64,
    pub eval_every: u64,
    pub rule: TargetRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub target: f64,
    pub n_a: u64,
    pub eval_every: u64,
    pub trace: RunTrace,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Runs the serial reference and extracts `a` and `N_a`.
pub fn serial_baseline(exp: &Experiment, cfg: &BaselineConfig) -> Result<Baseline> {
    let unit = CostModel::new(1.0, 0.0)?;
    let (budget, fixed) = match cfg.rule {
        TargetRule::Fixed(a) => (cfg.budget, Some(a)),
        TargetRule::Calibrated { at, .. } => (at, None),
    };
    let opts = RunOptions {
        budget,
        eval_every: cfg.eval_every,
        eval_steps: exp.eval_steps(),
        target: fixed.unwrap_or(f64::INFINITY),
        stop_at_target: fixed.is_some(),
        keep_snapshots: false,
    };
    let trace = run_serial_experiment(exp, &opts, &unit)?;
    let target = match cfg.rule {
        TargetRule::Fixed(a) => a,
        TargetRule::Calibrated { at, window } => {
            let mut window_acc: Vec<f64> = trace
                .records
                .iter()
                .filter(|r| r.parallel_iters + window > at)
                .map(|r| r.accuracy)
                .collect();
            median(&mut window_acc).ok_or(Error::BaselineUnreached { target: f64::NAN, budget })?
        }
    };
    let n_a = trace.iterations_to(target).ok_or(Error::BaselineUnreached { target, budget })?;
    Ok(Baseline { target, n_a, eval_every: cfg.eval_every, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapConfig {
    pub ks: Vec<usize>,
    pub taus: Vec<u64>,
    /// Per-cell budget in parallel iterations (rounds = ⌈budget/τ⌉).
    pub budget_iters: u64,
    pub warm_start: u64,
}

impl HeatmapConfig {
    fn cell_options(&self, tau: u64, baseline: &Baseline, eval_steps: usize) -> RunOptions {
        RunOptions {
            budget: self.budget_iters.div_ceil(tau).max(1),
            // keep the evaluation grid comparable to the baseline's in iterations
            eval_every: (baseline.eval_every / tau).max(1),
            eval_steps,
            target: baseline.target,
            stop_at_target: true,
            keep_snapshots: false,
        }
    }
}

/// One averaging run per `(K, τ)` cell; each cell holds the zero-overhead
/// speedup `N_a / (τ·M_a)` (recorded with `S = 0`, `C(b) = 1`).
pub fn sweep_heatmap<E: Executor>(
    exp: &Experiment,
    baseline: &Baseline,
    cfg: &HeatmapConfig,
    exec: &E,
) -> Result<SweepGrid> {
    let unit = CostModel::new(1.0, 0.0)?;
    let mut cells: Vec<(usize, u64)> = cfg
        .ks
        .iter()
        .flat_map(|&k| cfg.taus.iter().map(move |&t| (k, t)))
        .collect();
    let eval_steps = exp.eval_steps();
    let results = exec.map_mut(&mut cells, |_, &mut (k, tau)| {
        let opts = cfg.cell_options(tau, baseline, eval_steps);
        let sn = SparkNetConfig { k, tau, warm_start: cfg.warm_start };
        let trace = run_sparknet(exp, &sn, &opts, &unit, &Sequential)?;
        Ok(SpeedupPoint { k, tau, s: 0.0, c_b: 1.0, n_a: baseline.n_a, m_a: trace.rounds_to(baseline.target) })
    });
    let points = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepGrid {
        ks: cfg.ks.clone(),
        taus: cfg.taus.clone(),
        target: baseline.target,
        n_a: baseline.n_a,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadPoint {
    pub s: f64,
    pub naive: f64,
    pub sparknet: Option<f64>,
    pub best_tau: Option<u64>,
}

/// Speedup curves over `S` with `C(b) = 1`, from the measured `(τ, M_a)` of
/// one K row.
pub fn sweep_overhead(row: &[SpeedupPoint], k: usize, s_values: &[f64]) -> Vec<OverheadPoint> {
    let records: Vec<(u64, Option<u64>)> = row.iter().filter(|p| p.k == k).map(|p| (p.tau, p.m_a)).collect();
    let n_a = row.first().map_or(0, |p| p.n_a);
    s_values
        .iter()
        .map(|&s| {
            let best = best_tau_speedup(&records, n_a, 1.0, s);
            OverheadPoint { s, naive: naive_speedup(1.0, k, s), sparknet: best.map(|b| b.1), best_tau: best.map(|b| b.0) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauSweepConfig {
    pub k: usize,
    pub taus: Vec<u64>,
    /// Simulated seconds every trace is given (after the warm start).
    pub time_budget: f64,
    pub warm_start: u64,
    /// Evaluation spacing in parallel iterations.
    pub eval_every_iters: u64,
    pub cost: CostModel,
    pub target: f64,
}

/// One full (not early-stopped) averaging trace per τ, all given the same
/// simulated time budget.
pub fn sweep_tau<E: Executor>(exp: &Experiment, cfg: &TauSweepConfig, exec: &E) -> Result<Vec<RunTrace>> {
    let eval_steps = exp.eval_steps();
    let mut taus = cfg.taus.clone();
    let results = exec.map_mut(&mut taus, |_, &mut tau| {
        let rounds = libm::floor(cfg.time_budget / cfg.cost.round(tau)).max(1.0) as u64;
        let opts = RunOptions {
            budget: rounds,
            eval_every: (cfg.eval_every_iters / tau).max(1),
            eval_steps,
            target: cfg.target,
            stop_at_target: false,
            keep_snapshots: false,
        };
        let sn = SparkNetConfig { k: cfg.k, tau, warm_start: cfg.warm_start };
        run_sparknet(exp, &sn, &opts, &cfg.cost, &Sequential)
    });
    results.into_iter().collect()
}
