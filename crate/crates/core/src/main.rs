use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pulm_sim::harness::{self, ExperimentConfig, Task};
use pulm_sim::SimError;

/// Average consensus and decentralized optimization over time-varying broadcast networks.
#[derive(Debug, Parser)]
#[command(name = "pulm-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a consensus algorithm and write its per-round trace.
    Consensus(RunArgs),
    /// Run an optimizer and write its per-outer-round trajectory.
    Optimize(RunArgs),
    /// Certify (B, eta) on the realized mixing sequence.
    Certify(RunArgs),
    /// Fit (C_W, beta_W) for PULM on the configured topology.
    Calibrate(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV, or the output directory when --seeds is given.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a sweep over seeds, e.g. `0..5` or `1,4,9`. Parallelism is bounded by PULM_SIM_THREADS.
    #[arg(long, conflicts_with = "seed")]
    seeds: Option<String>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_CERTIFY: u8 = 3;

fn exit_code(err: &SimError) -> u8 {
    match err {
        SimError::InvalidArgument(_) => EXIT_CONFIG,
        SimError::CertificationFailed { .. } | SimError::CalibrationFailed(_) => EXIT_CERTIFY,
        _ => 1,
    }
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, SimError> {
    let bad = || SimError::InvalidArgument(format!("--seeds: expected `a..b` or a comma list, got {spec:?}"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn load(task: Task, args: &RunArgs) -> Result<ExperimentConfig, SimError> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if cfg.task != task {
        return Err(SimError::InvalidArgument(format!(
            "task: config says {} but the subcommand is {task}",
            cfg.task
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(task: Task, args: &RunArgs) -> Result<(), SimError> {
    let cfg = load(task, args)?;
    match &args.seeds {
        None => {
            let (report, path) = harness::run_experiment(&cfg, args.out.as_deref())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", report.summary);
            println!("wrote {}", path.display());
            Ok(())
        }
        Some(spec) => {
            let seeds = parse_seeds(spec)?;
            let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)
                .map_err(|e| SimError::InvalidArgument(format!("--out: cannot create {}: {e}", dir.display())))?;
            sweep(&cfg, &seeds, &dir)
        }
    }
}

fn sweep(cfg: &ExperimentConfig, seeds: &[u64], dir: &Path) -> Result<(), SimError> {
    let mut first_err = None;
    for (seed, result) in harness::sweep(cfg, seeds, dir, harness::sweep_threads()) {
        match result {
            Ok((report, path)) => println!("seed {seed}: {} -> {}", report.summary, path.display()),
            Err(e) => {
                eprintln!("seed {seed}: error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match &cli.command {
        Command::Consensus(a) => (Task::Consensus, a),
        Command::Optimize(a) => (Task::Optimize, a),
        Command::Certify(a) => (Task::Certify, a),
        Command::Calibrate(a) => (Task::Calibrate, a),
    };
    match run(task, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
