//! The `train`, `sweep` and `generate-data` commands.

use std::fs;
use std::path::{Path, PathBuf};

use parasgd_core::analysis::{
    serial_baseline, sweep_heatmap, sweep_overhead, sweep_tau, Baseline, BaselineConfig, HeatmapConfig,
    OverheadPoint, SweepGrid, TargetRule, TauSweepConfig,
};
use parasgd_core::schemes::{
    run_naive, run_serial_experiment, run_sparknet, Executor, Experiment, RunOptions, RunTrace, Scheme,
    SparkNetConfig,
};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::{io, report, svg};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Heatmap,
    Overhead,
    Tau,
}

pub struct TrainOutput {
    pub trace: RunTrace,
    pub target: Option<f64>,
    pub csv: PathBuf,
}

impl TrainOutput {
    /// `N_a = ...` for serial and naive runs, `M_a = ...` for SparkNet.
    pub fn summary(&self) -> String {
        let Some(a) = self.target else {
            return format!("final accuracy {}", fmt_acc(self.trace.final_accuracy()));
        };
        let (name, value) = match self.trace.params.scheme {
            Scheme::SparkNet => ("M_a", self.trace.rounds_to(a)),
            _ => ("N_a", self.trace.iterations_to(a)),
        };
        match value {
            Some(v) => format!("{name} = {v} (a = {a})"),
            None => format!("{name} = inf: a = {a} not reached within budget"),
        }
    }
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".into(), |a| format!("{a:.4}"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn train(cfg: &ExperimentConfig, out: &Path, exec: &impl Executor) -> Result<TrainOutput> {
    let target = match cfg.target {
        None => None,
        Some(TargetRule::Fixed(a)) => Some(a),
        Some(TargetRule::Calibrated { .. }) => {
            return Err(CliError::config("target.calibrate_at", "train needs a fixed target.a"))
        }
    };
    let exp = cfg.experiment()?;
    let mut opts = RunOptions {
        budget: cfg.budget_iters,
        eval_every: cfg.eval_every,
        eval_steps: exp.eval_steps(),
        target: target.unwrap_or(f64::INFINITY),
        stop_at_target: cfg.stop_at_target,
        keep_snapshots: false,
    };
    let trace = match cfg.scheme {
        Scheme::Serial => run_serial_experiment(&exp, &opts, &cfg.cost)?,
        Scheme::Naive => {
            if cfg.b % cfg.k != 0 {
                return Err(CliError::config("scheme.K", format!("K={} does not divide train.b={}", cfg.k, cfg.b)));
            }
            run_naive(&exp, cfg.k, &opts, &cfg.cost)?
        }
        Scheme::SparkNet => {
            opts.budget = cfg.budget_rounds.unwrap_or(cfg.budget_iters.div_ceil(cfg.tau));
            opts.eval_every = (cfg.eval_every / cfg.tau).max(1);
            let sn = SparkNetConfig { k: cfg.k, tau: cfg.tau, warm_start: cfg.warm_start };
            run_sparknet(&exp, &sn, &opts, &cfg.cost, exec)?
        }
    };
    create_dir(out)?;
    let csv = out.join("trace.csv");
    report::write_traces(&csv, std::slice::from_ref(&trace))?;
    Ok(TrainOutput { trace, target, csv })
}

pub fn baseline(cfg: &ExperimentConfig, exp: &Experiment) -> Result<Baseline> {
    let rule = cfg.target_rule()?;
    Ok(serial_baseline(exp, &BaselineConfig { budget: cfg.budget_iters, eval_every: cfg.eval_every, rule })?)
}

pub fn heatmap_grid(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    baseline: &Baseline,
    ks: &[usize],
    taus: &[u64],
    exec: &impl Executor,
) -> Result<SweepGrid> {
    let hc = HeatmapConfig {
        ks: ks.to_vec(),
        taus: taus.to_vec(),
        budget_iters: cfg.budget_iters,
        warm_start: cfg.warm_start,
    };
    Ok(sweep_heatmap(exp, baseline, &hc, exec)?)
}

pub struct SweepOutput {
    pub baseline: Option<Baseline>,
    pub grid: Option<SweepGrid>,
    pub overhead: Vec<OverheadPoint>,
    pub traces: Vec<RunTrace>,
    pub files: Vec<PathBuf>,
}

pub fn sweep(cfg: &ExperimentConfig, kind: SweepKind, out: &Path, with_svg: bool, exec: &impl Executor) -> Result<SweepOutput> {
    let exp = cfg.experiment()?;
    create_dir(out)?;
    let mut files = Vec::new();
    let save_svg = |name: &str, body: String, files: &mut Vec<PathBuf>| -> Result<()> {
        if with_svg {
            let p = out.join(name);
            write_file(&p, &body)?;
            files.push(p);
        }
        Ok(())
    };
    match kind {
        SweepKind::Heatmap => {
            let base = baseline(cfg, &exp)?;
            let grid = heatmap_grid(cfg, &exp, &base, &cfg.sweep_k, &cfg.sweep_tau, exec)?;
            let p = out.join("heatmap.csv");
            report::write_heatmap(&p, &grid)?;
            files.push(p);
            let p = out.join("baseline.csv");
            report::write_traces(&p, std::slice::from_ref(&base.trace))?;
            files.push(p);
            let title = format!("zero-overhead speedup, a = {:.4}, N_a = {}", grid.target, grid.n_a);
            save_svg("heatmap.svg", svg::heatmap(&grid, &title), &mut files)?;
            Ok(SweepOutput { baseline: Some(base), grid: Some(grid), overhead: Vec::new(), traces: Vec::new(), files })
        }
        SweepKind::Overhead => {
            let base = baseline(cfg, &exp)?;
            let grid = heatmap_grid(cfg, &exp, &base, &[cfg.k], &cfg.sweep_tau, exec)?;
            let overhead = sweep_overhead(&grid.points, cfg.k, &cfg.sweep_s);
            let p = out.join("overhead.csv");
            report::write_overhead(&p, &overhead)?;
            files.push(p);
            let p = out.join("overhead_cells.csv");
            report::write_heatmap(&p, &grid)?;
            files.push(p);
            save_svg("overhead.svg", overhead_chart(&overhead, cfg.k), &mut files)?;
            Ok(SweepOutput { baseline: Some(base), grid: Some(grid), overhead, traces: Vec::new(), files })
        }
        SweepKind::Tau => {
            let time_budget = cfg.time_budget.ok_or_else(|| CliError::config("budget.time", "required for the tau sweep"))?;
            let (target, base) = match cfg.target {
                Some(TargetRule::Fixed(a)) => (a, None),
                Some(TargetRule::Calibrated { .. }) => {
                    let b = baseline(cfg, &exp)?;
                    (b.target, Some(b))
                }
                None => (f64::INFINITY, None),
            };
            let tc = TauSweepConfig {
                k: cfg.k,
                taus: cfg.sweep_tau.clone(),
                time_budget,
                warm_start: cfg.warm_start,
                eval_every_iters: cfg.eval_every,
                cost: cfg.cost,
                target,
            };
            let traces = sweep_tau(&exp, &tc, exec)?;
            let p = out.join("tau.csv");
            report::write_traces(&p, &traces)?;
            files.push(p);
            let series: Vec<svg::Series> = traces
                .iter()
                .map(|t| svg::Series {
                    label: format!("tau = {}", t.params.tau),
                    points: t.records.iter().map(|r| (r.sim_time, r.accuracy)).collect(),
                })
                .collect();
            let title = format!("accuracy vs simulated time, K = {}", cfg.k);
            save_svg("tau.svg", svg::line_chart(&series, &title, "simulated time", "accuracy", false), &mut files)?;
            Ok(SweepOutput { baseline: base, grid: None, overhead: Vec::new(), traces, files })
        }
    }
}

pub fn overhead_chart(points: &[OverheadPoint], k: usize) -> String {
    let naive = svg::Series { label: "naive".into(), points: points.iter().map(|p| (p.s, p.naive)).collect() };
    let spark = svg::Series {
        label: "SparkNet (best tau)".into(),
        points: points.iter().filter_map(|p| p.sparknet.map(|v| (p.s, v))).collect(),
    };
    let title = format!("speedup vs communication overhead, K = {k}, C_b = 1");
    svg::line_chart(&[naive, spark], &title, "S", "speedup", true)
}

/// Writes `train.csv`, `test.csv` and `manifest.txt`.
pub fn generate_data(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let DataSource::Synthetic { spec, per_class, test_per_class } = &cfg.data else {
        return Err(CliError::config("data.source", "generate-data needs data.source = synthetic"));
    };
    create_dir(out)?;
    let (train, test) = cfg.load_data()?;
    let (tp, vp, mp) = (out.join("train.csv"), out.join("test.csv"), out.join("manifest.txt"));
    io::write_csv(&tp, &train)?;
    io::write_csv(&vp, &test)?;
    let [c, h, w] = spec.dims;
    let manifest = format!(
        "# synthetic Gaussian clusters, unit within-class variance\n\
         data.classes = {}\n\
         data.shape = {c},{h},{w}\n\
         data.per_class = {per_class}\n\
         data.test_per_class = {test_per_class}\n\
         data.separation = {}\n\
         data.seed = {}\n\
         # pixel = clamp(round(128 + 32 v), 0, 255); rows are label,p0,p1,...\n\
         # load with: data.source = csv, data.train_csv = train.csv, data.test_csv = test.csv\n\
         train_rows = {}\n\
         test_rows = {}\n",
        spec.num_classes,
        spec.separation,
        spec.seed,
        train.len(),
        test.len(),
    );
    write_file(&mp, &manifest)?;
    Ok(vec![tp, vp, mp])
}

/// `--out`, then `output.dir`, then `$PARASGD_OUT`, then `.`.
pub fn output_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os("PARASGD_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}
