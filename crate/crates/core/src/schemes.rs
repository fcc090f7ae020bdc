//! Serial SGD, naive minibatch splitting and τ-round model averaging, run
//! under a simulated wall clock.
//!
//! Simulated time is charged exactly as the closed forms:
//!
//! | scheme   | time after the run so far                        |
//! |----------|--------------------------------------------------|
//! | serial   | `t · C(b)`                                       |
//! | naive    | `t · (C(b)/K^γ + S)`                             |
//! | sparknet | `w · C(b) + r · (τ · C(b) + S)`                  |
//!
//! with `t` iterations, `r` rounds and `w` warm-start iterations. Evaluation
//! is free. The clock is computed from integer counters, never accumulated by
//! repeated addition, so the reported value is bitwise the closed form.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::{batch_iterator, shard, BatchIter, Dataset};
use crate::error::{Error, Result};
use crate::model::{Net, NetParams, SgdConfig, WeightCollection};
use crate::rng::worker_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Seconds per gradient step on a size-`b` batch on one machine.
    pub c_b: f64,
    /// Seconds per synchronization (one broadcast plus one collect).
    pub s: f64,
    /// Sublinearity exponent: a `b/K` slice costs `C(b) / K^γ`.
    pub gamma: f64,
}

impl CostModel {
    pub fn new(c_b: f64, s: f64) -> Result<Self> {
        Self::with_gamma(c_b, s, 1.0)
    }

    pub fn with_gamma(c_b: f64, s: f64, gamma: f64) -> Result<Self> {
        if !(c_b > 0.0 && c_b.is_finite()) {
            return Err(Error::Scheme(format!("C_b must be > 0, got {c_b}")));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Scheme(format!("S must be >= 0, got {s}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Scheme(format!("gamma must be in (0, 1], got {gamma}")));
        }
        Ok(Self { c_b, s, gamma })
    }

    /// Cost of one naive iteration: `C(b)/K^γ + S`.
    pub fn naive_iteration(&self, k: usize) -> f64 {
        self.c_b / libm::pow(k as f64, self.gamma) + self.s
    }

    /// Cost of one averaging round: `τ·C(b) + S`.
    pub fn round(&self, tau: u64) -> f64 {
        tau as f64 * self.c_b + self.s
    }
}

/// `elapsed = offset + periods · period`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    offset: f64,
    period: f64,
    periods: u64,
}

impl SimClock {
    pub fn new(period: f64) -> Self {
        Self::with_offset(0.0, period)
    }

    pub fn with_offset(offset: f64, period: f64) -> Self {
        Self { offset, period, periods: 0 }
    }

    pub fn tick(&mut self) {
        self.periods += 1;
    }

    pub fn periods(&self) -> u64 {
        self.periods
    }

    pub fn elapsed(&self) -> f64 {
        self.offset + self.periods as f64 * self.period
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Serial,
    Naive,
    SparkNet,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Serial, Scheme::Naive, Scheme::SparkNet];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Serial => "serial",
            Scheme::Naive => "naive",
            Scheme::SparkNet => "sparknet",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Scheme(format!("unknown scheme {s:?} (valid: serial, naive, sparknet)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParams {
    pub scheme: Scheme,
    pub k: usize,
    pub tau: u64,
    pub b: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    /// Batch-`b` gradient steps performed in total, across all machines.
    pub serial_iters: u64,
    /// Steps along the critical path.
    pub parallel_iters: u64,
    /// Synchronizations so far.
    pub rounds: u64,
    pub sim_time: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    TargetReached,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub params: RunParams,
    pub records: Vec<EvalRecord>,
    pub termination: Termination,
    /// Weights at each evaluation, when requested.
    pub snapshots: Vec<WeightCollection>,
    pub final_weights: WeightCollection,
}

impl RunTrace {
    pub fn first_reaching(&self, target: f64) -> Option<&EvalRecord> {
        self.records.iter().find(|r| r.accuracy >= target)
    }

    /// Serial iterations to first reach `target` (N_a for a serial run).
    pub fn iterations_to(&self, target: f64) -> Option<u64> {
        self.first_reaching(target).map(|r| r.parallel_iters)
    }

    /// Rounds to first reach `target` (M_a for an averaging run).
    pub fn rounds_to(&self, target: f64) -> Option<u64> {
        self.first_reaching(target).map(|r| r.rounds)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.accuracy)
    }
}

/// Budgets and evaluation cadence. For serial and naive runs `budget` and
/// `eval_every` count iterations; for averaging runs they count rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub budget: u64,
    pub eval_every: u64,
    /// Validation batches per evaluation.
    pub eval_steps: usize,
    pub target: f64,
    pub stop_at_target: bool,
    pub keep_snapshots: bool,
}

impl RunOptions {
    fn validate(&self) -> Result<()> {
        if self.eval_every == 0 {
            return Err(Error::Scheme("eval_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Runs the worker computations of one round. Implementations must call `f`
/// exactly once per item and return results in item order.
pub trait Executor: Sync {
    fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync;
}

/// In-order execution on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_mut<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync,
    {
        items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Everything a run needs besides the scheme parameters.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub net: NetParams,
    pub train: Arc<Dataset>,
    pub validation: Arc<Dataset>,
    /// Per-worker minibatch size `b`.
    pub batch_size: usize,
    pub sgd: SgdConfig,
    /// Drives initialization, sharding and every batch order.
    pub seed: u64,
    pub eval_batch: usize,
}

impl Experiment {
    /// Batch stream of `worker` when the training set is split `k` ways.
    /// The serial stream is worker 0 of a 1-way split.
    pub fn worker_stream(&self, k: usize, worker: usize) -> Result<BatchIter> {
        let shards = shard(&self.train, k, self.seed)?;
        batch_iterator(self.train.clone(), &shards[worker], self.batch_size, worker_seed(self.seed, worker))
    }

    pub fn validation_stream(&self) -> Result<crate::data::SequentialBatches> {
        self.validation.clone().sequential_batches(self.eval_batch)
    }

    /// Validation batches in one full pass.
    pub fn eval_steps(&self) -> usize {
        self.validation.batches_per_pass(self.eval_batch)
    }

    /// Freshly initialized network without data attached.
    pub fn fresh_net(&self) -> Result<Net> {
        Net::build(&self.net, self.seed, self.sgd)
    }

    /// Network with the serial training stream and validation data attached.
    pub fn serial_net(&self) -> Result<Net> {
        let mut net = self.fresh_net()?;
        net.set_training_data(alloc::boxed::Box::new(self.worker_stream(1, 0)?));
        net.set_validation_data(alloc::boxed::Box::new(self.validation_stream()?));
        Ok(net)
    }

    fn evaluator(&self) -> Result<Net> {
        let mut net = self.fresh_net()?;
        net.set_validation_data(alloc::boxed::Box::new(self.validation_stream()?));
        Ok(net)
    }

    fn params(&self, scheme: Scheme, k: usize, tau: u64) -> RunParams {
        RunParams {
            scheme,
            k,
            tau,
            b: self.batch_size,
            learning_rate: self.sgd.learning_rate,
            seed: self.seed,
        }
    }
}

struct Recorder {
    opts: RunOptions,
    records: Vec<EvalRecord>,
    snapshots: Vec<WeightCollection>,
    reached: bool,
}

impl Recorder {
    fn new(opts: RunOptions) -> Self {
        Self { opts, records: Vec::new(), snapshots: Vec::new(), reached: false }
    }

    fn due(&self, done: u64) -> bool {
        done % self.opts.eval_every == 0 || done == self.opts.budget
    }

    /// Returns true when the run should stop.
    fn record(&mut self, rec: EvalRecord, weights: &WeightCollection) -> bool {
        if rec.accuracy >= self.opts.target {
            self.reached = true;
        }
        self.records.push(rec);
        if self.opts.keep_snapshots {
            self.snapshots.push(weights.clone());
        }
        self.reached && self.opts.stop_at_target
    }

    fn finish(self, params: RunParams, final_weights: WeightCollection) -> RunTrace {
        let termination = if self.reached && self.opts.stop_at_target {
            Termination::TargetReached
        } else {
            Termination::BudgetExhausted
        };
        RunTrace { params, records: self.records, termination, snapshots: self.snapshots, final_weights }
    }
}

/// Plain SGD on `net`'s attached training stream, evaluated every
/// `eval_every` iterations with `eval_steps` validation batches.
pub fn run_serial(net: &mut Net, opts: &RunOptions, cost: &CostModel) -> Result<RunTrace> {
    opts.validate()?;
    let params = RunParams {
        scheme: Scheme::Serial,
        k: 1,
        tau: 1,
        b: 0,
        learning_rate: net.sgd().learning_rate,
        seed: 0,
    };
    run_serial_with(net, opts, cost, params)
}

fn run_serial_with(net: &mut Net, opts: &RunOptions, cost: &CostModel, params: RunParams) -> Result<RunTrace> {
    let mut clock = SimClock::new(cost.c_b);
    let mut rec = Recorder::new(*opts);
    for t in 1..=opts.budget {
        net.train(1)?;
        clock.tick();
        if rec.due(t) {
            let accuracy = net.test(opts.eval_steps)?;
            let r = EvalRecord {
                serial_iters: t,
                parallel_iters: t,
                rounds: 0,
                sim_time: clock.elapsed(),
                accuracy,
            };
            if rec.record(r, net.weights()) {
                break;
            }
        }
    }
    Ok(rec.finish(params, net.get_weights()))
}

/// Serial SGD on the experiment's standard stream; the trace carries the
/// experiment's parameters.
pub fn run_serial_experiment(exp: &Experiment, opts: &RunOptions, cost: &CostModel) -> Result<RunTrace> {
    opts.validate()?;
    let mut net = exp.serial_net()?;
    run_serial_with(&mut net, opts, cost, exp.params(Scheme::Serial, 1, 1))
}

/// Each size-`b` batch of the serial stream is split into `k` slices; the
/// slice gradients (each of its slice-mean loss) are averaged, which equals
/// the full-batch gradient, and one update is applied.
pub fn run_naive(exp: &Experiment, k: usize, opts: &RunOptions, cost: &CostModel) -> Result<RunTrace> {
    opts.validate()?;
    if k == 0 || exp.batch_size % k != 0 {
        return Err(Error::Scheme(format!("K={k} does not divide b={}", exp.batch_size)));
    }
    let mut stream = exp.worker_stream(1, 0)?;
    let mut net = exp.fresh_net()?;
    net.set_validation_data(alloc::boxed::Box::new(exp.validation_stream()?));
    let mut clock = SimClock::new(cost.naive_iteration(k));
    let mut rec = Recorder::new(*opts);
    for t in 1..=opts.budget {
        let batch = stream.next().ok_or(Error::NoData("training"))?;
        let parts = batch.split(k)?;
        let grads = parts.iter().map(|p| net.backward(p)).collect::<Result<Vec<_>>>()?;
        let grad = WeightCollection::mean(&grads)?;
        net.apply_gradient(&grad)?;
        clock.tick();
        if rec.due(t) {
            let accuracy = net.test(opts.eval_steps)?;
            let r = EvalRecord {
                serial_iters: t,
                parallel_iters: t,
                rounds: t,
                sim_time: clock.elapsed(),
                accuracy,
            };
            if rec.record(r, net.weights()) {
                break;
            }
        }
    }
    Ok(rec.finish(exp.params(Scheme::Naive, k, 1), net.get_weights()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparkNetConfig {
    pub k: usize,
    pub tau: u64,
    /// Serial steps run before round 1, on worker 0's network and stream.
    pub warm_start: u64,
}

/// τ-round model averaging: broadcast, `tau` local steps per worker on its
/// own shard, collect, average (ascending worker order). Evaluation happens
/// on the averaged model at round boundaries.
pub fn run_sparknet<E: Executor>(
    exp: &Experiment,
    cfg: &SparkNetConfig,
    opts: &RunOptions,
    cost: &CostModel,
    exec: &E,
) -> Result<RunTrace> {
    opts.validate()?;
    if cfg.k == 0 || cfg.tau == 0 {
        return Err(Error::Scheme(format!("need K >= 1 and tau >= 1, got K={} tau={}", cfg.k, cfg.tau)));
    }
    let shards = shard(&exp.train, cfg.k, exp.seed)?;
    let mut workers = shards
        .iter()
        .map(|s| {
            if s.len() < exp.batch_size {
                return Err(Error::BatchTooLarge { b: exp.batch_size, size: s.len() });
            }
            let mut net = exp.fresh_net()?;
            let it = batch_iterator(exp.train.clone(), s, exp.batch_size, worker_seed(exp.seed, s.worker))?;
            net.set_training_data(alloc::boxed::Box::new(it));
            Ok(net)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut evaluator = exp.evaluator()?;

    workers[0].train(cfg.warm_start as usize)?;
    let mut weights = workers[0].get_weights();
    let mut clock = SimClock::with_offset(cfg.warm_start as f64 * cost.c_b, cost.round(cfg.tau));
    let mut rec = Recorder::new(*opts);
    let tau = cfg.tau as usize;

    for r in 1..=opts.budget {
        let broadcast = &weights;
        let collected = exec.map_mut(&mut workers, |_, net| {
            net.set_weights(broadcast)?;
            net.train(tau)?;
            Ok(net.get_weights())
        });
        let collected = collected.into_iter().collect::<Result<Vec<_>>>()?;
        weights = WeightCollection::mean(&collected)?;
        clock.tick();
        if rec.due(r) {
            evaluator.set_weights(&weights)?;
            let accuracy = evaluator.test(opts.eval_steps)?;
            let rec_entry = EvalRecord {
                serial_iters: cfg.warm_start + cfg.k as u64 * cfg.tau * r,
                parallel_iters: cfg.warm_start + cfg.tau * r,
                rounds: r,
                sim_time: clock.elapsed(),
                accuracy,
            };
            if rec.record(rec_entry, &weights) {
                break;
            }
        }
    }
    Ok(rec.finish(exp.params(Scheme::SparkNet, cfg.k, cfg.tau), weights))
}
