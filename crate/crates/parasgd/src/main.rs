use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use parasgd::commands::{self, SweepKind};
use parasgd::config::ExperimentConfig;
use parasgd::exec::ThreadPool;
use parasgd::{CliError, Result};

#[derive(Parser)]
#[command(name = "parasgd", version, about = "Serial, naive and model-averaging SGD under a simulated clock")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (flat key = value file)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to output.dir, then $PARASGD_OUT, then .
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides train.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to available parallelism
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also render SVG charts
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme and write trace.csv
    Train,
    /// Heatmap, overhead or tau sweep
    Sweep {
        #[arg(value_enum)]
        kind: Kind,
    },
    /// Write a synthetic dataset as CSV plus a manifest
    GenerateData,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Heatmap,
    Overhead,
    Tau,
}

fn run(cli: Cli) -> Result<()> {
    let path = cli.config.ok_or_else(|| CliError::config("--config", "required"))?;
    let mut cfg = ExperimentConfig::load(&path).map_err(|e| match e {
        CliError::Io { path, source } => CliError::config(path.display().to_string(), source.to_string()),
        other => other,
    })?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let exec = match cli.threads {
        Some(0) => return Err(CliError::config("--threads", "must be >= 1")),
        Some(n) => ThreadPool::new(n),
        None => ThreadPool::available(),
    };
    let out = commands::output_dir(cli.out.as_deref(), &cfg);
    match cli.command {
        Command::Train => {
            let o = commands::train(&cfg, &out, &exec)?;
            println!("{}", o.summary());
            println!("wrote {}", o.csv.display());
        }
        Command::Sweep { kind } => {
            let kind = match kind {
                Kind::Heatmap => SweepKind::Heatmap,
                Kind::Overhead => SweepKind::Overhead,
                Kind::Tau => SweepKind::Tau,
            };
            let o = commands::sweep(&cfg, kind, &out, cli.svg, &exec)?;
            if let Some(b) = &o.baseline {
                println!("target a = {} reached by serial SGD at N_a = {}", b.target, b.n_a);
            }
            for f in &o.files {
                println!("wrote {}", f.display());
            }
        }
        Command::GenerateData => {
            for f in commands::generate_data(&cfg, &out)? {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
