use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use parasgd::commands::{self, SweepKind};
use parasgd::config::ExperimentConfig;
use parasgd::exec::ThreadPool;
use parasgd::report;
use parasgd_core::schemes::{Scheme, Sequential};

const SMALL: &str = "\
net.preset = mlp
net.hidden = 16
data.classes = 3
data.shape = 1,4,4
data.per_class = 40
data.test_per_class = 10
data.separation = 4
train.b = 8
eval.batch = 10
";

/// `SMALL` plus `extra`; keys in `extra` win.
fn small(extra: &str) -> String {
    let defaults = [("train.lr", "0.1"), ("train.warm_start", "0"), ("eval.every", "5")];
    let mut text = String::from(SMALL);
    for (k, v) in defaults {
        if !extra.lines().any(|l| l.split('=').next().unwrap().trim() == k) {
            text.push_str(&format!("{k} = {v}\n"));
        }
    }
    text + extra
}

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("exp.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_parasgd"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn cfg(extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&small(extra), Path::new(".")).unwrap()
}

#[test]
fn zero_budget_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &small("budget.iters = 0\n"), &["train"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert_eq!(csv, "scheme,K,tau,b,round,serial_iters,parallel_iters,sim_time,accuracy\n");
}

#[test]
fn unknown_scheme_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &small("scheme.name = hogwild\n"), &["train"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scheme.name") && err.contains("serial, naive, sparknet"), "{err}");
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &small("scheme.K = 0\n"), &["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scheme.K"));
    let out = run(dir.path(), &small("scheme.name = naive\nscheme.K = 3\n"), &["train"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = "data.source = csv\ndata.train_csv = nope.csv\ndata.test_csv = nope.csv\n";
    let out = run(dir.path(), text, &["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.train_csv"));
}

#[test]
fn runtime_failure_exits_one() {
    // Diverging learning rate trips the non-finite guard.
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &small("train.lr = 1e200\nbudget.iters = 20\n"), &["train"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_prints_iterations_to_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &small("target.a = 0.01\nbudget.iters = 20\n"), &["train"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("N_a = 5"));
    let sn = small("target.a = 0.01\nbudget.iters = 20\nscheme.name = sparknet\nscheme.K = 2\nscheme.tau = 5\n");
    let out = run(dir.path(), &sn, &["train"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("M_a = 1"));
}

#[test]
fn single_worker_sparknet_tracks_serial() {
    let dir = tempfile::tempdir().unwrap();
    let sn_cfg = cfg("target.a = 0.9\nbudget.iters = 300\nscheme.name = sparknet\nscheme.K = 1\nscheme.tau = 10\n");
    let sn = commands::train(&sn_cfg, dir.path(), &Sequential).unwrap();
    let m_a = sn.trace.rounds_to(0.9).expect("reaches 0.9");

    // Same evaluation grid: identical trajectories give identical counts.
    let serial = commands::train(&cfg("target.a = 0.9\nbudget.iters = 300\neval.every = 10\n"), dir.path(), &Sequential).unwrap();
    assert_eq!(serial.trace.iterations_to(0.9), Some(m_a * 10));

    // Finer serial grid: N_a can only be earlier, and the K=1 run sees
    // exactly the serial accuracies at multiples of tau.
    let fine = commands::train(&cfg("target.a = 0.9\nbudget.iters = 300\n"), dir.path(), &Sequential).unwrap();
    let n_a = fine.trace.iterations_to(0.9).unwrap();
    assert!(n_a <= m_a * 10);
    for r in &sn.trace.records {
        let s = fine.trace.records.iter().find(|s| s.parallel_iters == r.parallel_iters).unwrap();
        assert_eq!(s.accuracy.to_bits(), r.accuracy.to_bits());
    }
}

#[test]
fn trace_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("budget.iters = 40\nscheme.name = sparknet\nscheme.K = 2\nscheme.tau = 3\ncost.C_b = 0.7\ncost.S = 3.3\n");
    let o = commands::train(&c, dir.path(), &Sequential).unwrap();
    let rows = report::read_traces(&o.csv).unwrap();
    assert_eq!(rows.len(), o.trace.records.len());
    for (row, rec) in rows.iter().zip(&o.trace.records) {
        assert_eq!(row.scheme, Scheme::SparkNet);
        assert_eq!((row.k, row.tau, row.b), (2, 3, 8));
        assert_eq!(row.round, rec.rounds);
        assert_eq!(row.serial_iters, rec.serial_iters);
        assert_eq!(row.parallel_iters, rec.parallel_iters);
        assert_eq!(row.sim_time.to_bits(), rec.sim_time.to_bits());
        assert_eq!(row.accuracy.to_bits(), rec.accuracy.to_bits());
    }
}

#[test]
fn threaded_rounds_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("budget.iters = 60\nscheme.name = sparknet\nscheme.K = 3\nscheme.tau = 4\ntrain.warm_start = 5\n");
    let a = commands::train(&c, &dir.path().join("a"), &Sequential).unwrap();
    let b = commands::train(&c, &dir.path().join("b"), &ThreadPool::new(3)).unwrap();
    assert_eq!(a.trace.records, b.trace.records);
    assert!(a.trace.final_weights.bit_identical(&b.trace.final_weights));
}

#[test]
fn one_cell_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("target.calibrate_at = 100\nbudget.iters = 400\nsweep.K = 1\nsweep.tau = 1\n");
    let o = commands::sweep(&c, SweepKind::Heatmap, dir.path(), true, &Sequential).unwrap();
    let rows = report::read_heatmap(&dir.path().join("heatmap.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].speedup, Some(1.0));
    assert_eq!(rows[0].n_a, o.baseline.unwrap().n_a);
    assert!(fs::read_to_string(dir.path().join("heatmap.svg")).unwrap().contains("<rect"));
}

#[test]
fn overhead_sweep_naive_column() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("target.calibrate_at = 100\nbudget.iters = 400\nscheme.K = 4\nsweep.tau = 1,5,25\nsweep.S = 0,1,10,100\n");
    commands::sweep(&c, SweepKind::Overhead, dir.path(), true, &Sequential).unwrap();
    let rows = report::read_overhead(&dir.path().join("overhead.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].naive, 4.0);
    for w in rows.windows(2) {
        assert!(w[1].naive < w[0].naive);
        if let (Some(a), Some(b)) = (w[0].sparknet, w[1].sparknet) {
            assert!(b <= a);
        }
    }
    assert!(fs::read_to_string(dir.path().join("overhead.svg")).unwrap().contains("<polyline"));
}

#[test]
fn tau_sweep_traces() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("target.a = 0.5\nscheme.K = 2\nsweep.tau = 1,5,25\nbudget.time = 100\ncost.S = 2\n");
    let o = commands::sweep(&c, SweepKind::Tau, dir.path(), true, &Sequential).unwrap();
    assert_eq!(o.traces.len(), 3);
    let rows = report::read_traces(&dir.path().join("tau.csv")).unwrap();
    assert_eq!(rows.len(), o.traces.iter().map(|t| t.records.len()).sum::<usize>());
    for t in &o.traces {
        assert!(t.records.windows(2).all(|w| w[1].sim_time > w[0].sim_time));
    }
}

#[test]
fn generate_data_round_trips_through_csv_loader() {
    let dir = tempfile::tempdir().unwrap();
    let text = "data.classes = 2\ndata.per_class = 50\ndata.test_per_class = 5\ndata.shape = 1,3,3\ndata.seed = 9\n";
    let out = run(dir.path(), text, &["generate-data"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let train = fs::read_to_string(dir.path().join("out/train.csv")).unwrap();
    assert_eq!(train.lines().count(), 100);
    let manifest = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
    assert!(manifest.contains("data.seed = 9") && manifest.contains("data.per_class = 50"));

    let again = tempfile::tempdir().unwrap();
    run(again.path(), text, &["generate-data"]);
    assert_eq!(train, fs::read_to_string(again.path().join("out/train.csv")).unwrap());

    let ds = parasgd::io::load_csv(&dir.path().join("out/train.csv"), [1, 3, 3], 2).unwrap();
    assert_eq!(ds.len(), 100);
    assert!(ds.images().data().iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let text = small("budget.iters = 10\n");
    run(dir.path(), &text, &["train", "--seed", "1"]);
    let a = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    run(dir.path(), &text, &["train", "--seed", "2"]);
    let b = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert_ne!(a, b);
}
