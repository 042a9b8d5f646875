//! Experiment orchestration: build the network, data and objective from an
//! [`ExperimentConfig`], run the task and render a CSV.
//!
//! Every run is a pure function of the config (including its seed), so rendering the same
//! config twice yields byte-identical output.

pub mod calibrate;
pub mod config;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rand_distr::StandardNormal;

pub use self::calibrate::{calibrate_sequence, CalibrationReport, WindowFit};
pub use self::config::{
    Algorithm, CalibrateSpec, DataConfig, ExperimentConfig, InputKind, LatentSpec, ObjectiveSpec, OptimizerSpec,
    StaticGraph, Task, TopologyConfig, TopologySpec,
};
pub use crate::trace::Status;

use crate::consensus::{plain_gossip_run, pulm_run, push_sum_run};
use crate::error::{Result, SimError};
use crate::linalg::Matrix;
use crate::mixing::{certify_eta_b, row_stochastic_from_graph, MixingCertificate, MixingMatrix};
use crate::objectives::{Objective, QuadraticObjective, SyntheticLogistic};
use crate::optimization::{
    centralized_gd_run, pulm_dgd_run, push_diging_run, OptimizerConfig, PushDigingConfig, RkSchedule,
};
use crate::rng::SeedStream;
use crate::topology::{gen_latent_strongly_connected, DirectedGraph, Network, PacketLossModel, TopologyModel};
use crate::trace::{format_f64, CsvRecord};

/// Environment variable bounding sweep parallelism.
pub const THREADS_ENV: &str = "PULM_SIM_THREADS";

/// A network plus any warning raised while building it.
#[derive(Debug, Clone)]
pub struct BuiltNetwork {
    pub network: Network,
    pub warning: Option<String>,
}

pub fn build_network(cfg: &ExperimentConfig) -> Result<BuiltNetwork> {
    let t = &cfg.topology;
    let mut warning = None;
    let model = match t.spec {
        TopologySpec::RandomBroadcast { p_c } => TopologyModel::random_broadcast(t.n, p_c, cfg.seed)?,
        TopologySpec::LatentDropout { latent, p_d } => {
            let graph = match latent {
                LatentSpec::Random { sparsity } => {
                    let g = gen_latent_strongly_connected(t.n, sparsity, cfg.seed)?;
                    warning = g.warning;
                    g.graph
                }
                LatentSpec::Ring => DirectedGraph::ring(t.n),
                LatentSpec::Complete => DirectedGraph::complete(t.n),
            };
            TopologyModel::latent_dropout(graph, p_d, cfg.seed)?
        }
        TopologySpec::Static(StaticGraph::Complete) => TopologyModel::fixed(DirectedGraph::complete(t.n)),
        TopologySpec::Static(StaticGraph::Ring) => TopologyModel::fixed(DirectedGraph::ring(t.n)),
    };
    let mut network = Network::new(model);
    if t.p_t > 0.0 {
        network = network.with_loss(PacketLossModel::new(t.p_t, cfg.seed)?);
    }
    Ok(BuiltNetwork { network, warning })
}

/// `n x d` initial values for consensus runs.
pub fn consensus_input(cfg: &ExperimentConfig) -> Matrix {
    let mut rng = SeedStream::new(cfg.seed).derive("consensus-input").rng();
    match cfg.data.kind {
        InputKind::Gaussian => Matrix::from_fn(cfg.topology.n, cfg.data.d, |_, _| rng.sample(StandardNormal)),
        InputKind::Uniform => Matrix::from_fn(cfg.topology.n, cfg.data.d, |_, _| rng.random::<f64>()),
    }
}

pub fn build_objective(cfg: &ExperimentConfig) -> Result<Box<dyn Objective>> {
    let n = cfg.topology.n;
    Ok(match cfg.objective {
        ObjectiveSpec::Logistic {
            samples,
            features,
            sigma_h,
            lambda,
        } => {
            let gen = SyntheticLogistic {
                lambda,
                ..SyntheticLogistic::new(n, samples, features, sigma_h)
            };
            Box::new(gen.generate(cfg.seed)?)
        }
        ObjectiveSpec::Quadratic { features } => Box::new(QuadraticObjective::random(n, features, cfg.seed)?),
    })
}

/// Row-stochastic matrices for the first `rounds` rounds, built from the effective graphs.
pub fn realize_row_matrices(net: &Network, rounds: usize) -> Vec<MixingMatrix> {
    (0..rounds)
        .map(|k| row_stochastic_from_graph(&net.round(k as u64).effective))
        .collect()
}

pub fn certify(cfg: &ExperimentConfig) -> Result<MixingCertificate> {
    let built = build_network(cfg)?;
    certify_eta_b(&realize_row_matrices(&built.network, cfg.rounds), cfg.certify_window)
}

pub fn calibrate(cfg: &ExperimentConfig) -> Result<CalibrationReport> {
    let built = build_network(cfg)?;
    let c = cfg.calibrate;
    calibrate_sequence(
        &realize_row_matrices(&built.network, c.windows * c.rounds),
        c.windows,
        c.rounds,
    )
}

/// Rendered result of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub csv: String,
    pub status: Status,
    /// Human-readable one-line summary.
    pub summary: String,
    pub warnings: Vec<String>,
}

fn render<R: CsvRecord>(rows: &[R]) -> Result<String> {
    render_raw(R::header(), rows.iter().map(CsvRecord::fields))
}

fn render_raw(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| SimError::invalid(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Runs the configured task in memory.
pub fn execute(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.task {
        Task::Consensus => {
            let built = build_network(cfg)?;
            let x = consensus_input(cfg);
            let run = match cfg.algorithm {
                Algorithm::Pulm => pulm_run(&x, &built.network, cfg.rounds)?,
                Algorithm::PlainGossip => plain_gossip_run(&x, &built.network, cfg.rounds)?,
                Algorithm::PushSum => push_sum_run(&x, &built.network, cfg.rounds)?,
                other => {
                    return Err(SimError::invalid(format!(
                        "algorithm: {other:?} is not a consensus algorithm"
                    )))
                }
            };
            let last = run.trace.last().expect("trace has the initial row");
            let err = last
                .consensus_error
                .map_or("undefined".to_string(), |e| format!("{e:.3e}"));
            Ok(Report {
                csv: render(&run.trace)?,
                status: run.status,
                summary: format!(
                    "round {}: consensus_error {err}, w_error {:.3e}, status {}",
                    last.round, last.w_error, run.status
                ),
                warnings: built.warning.into_iter().collect(),
            })
        }
        Task::Optimize => {
            let built = build_network(cfg)?;
            let obj = build_objective(cfg)?;
            let x0 = vec![0.0; obj.dim()];
            let o = &cfg.optimizer;
            let traj = match cfg.algorithm {
                Algorithm::PulmDgd => {
                    let oc = OptimizerConfig::new(o.gamma, o.outer, o.schedule).with_anchor(o.anchor);
                    pulm_dgd_run(obj.as_ref(), &built.network, &oc, &x0)?
                }
                Algorithm::PushDiging => {
                    // Same communication budget as PULM-DGD, one record per outer round.
                    let (rounds, record_every) = match o.schedule {
                        RkSchedule::Constant(r) => (o.outer * r, r),
                        log => ((0..o.outer).map(|k| log.rounds(k)).sum(), 1),
                    };
                    let pc = PushDigingConfig {
                        alpha: o.gamma,
                        rounds,
                        record_every,
                    };
                    push_diging_run(obj.as_ref(), &built.network, &pc, &x0)?
                }
                Algorithm::CentralizedGd => centralized_gd_run(obj.as_ref(), o.gamma, o.outer, &x0)?,
                other => return Err(SimError::invalid(format!("algorithm: {other:?} is not an optimizer"))),
            };
            let last = traj.records.last().expect("trajectory has the initial row");
            Ok(Report {
                csv: render(&traj.records)?,
                status: traj.status,
                summary: format!(
                    "outer {}: loss {:.6e}, grad_norm_sq {:.3e}, status {}",
                    last.outer_k, last.loss_mean, last.grad_norm_sq, traj.status
                ),
                warnings: built.warning.into_iter().collect(),
            })
        }
        Task::Certify => {
            let cert = certify(cfg)?;
            let row = vec![
                cert.window.to_string(),
                format_f64(cert.eta),
                cert.windows_checked.to_string(),
                cfg.rounds.to_string(),
            ];
            Ok(Report {
                csv: render_raw(&["window", "eta", "windows_checked", "rounds"], std::iter::once(row))?,
                status: Status::Ok,
                summary: format!(
                    "B = {}, eta = {:.6e}, windows checked = {}",
                    cert.window, cert.eta, cert.windows_checked
                ),
                warnings: Vec::new(),
            })
        }
        Task::Calibrate => {
            let rep = calibrate(cfg)?;
            let mut rows: Vec<Vec<String>> = rep
                .fits
                .iter()
                .map(|f| {
                    vec![
                        f.window.to_string(),
                        f.start_round.to_string(),
                        format_f64(f.slope),
                        format_f64(f.intercept),
                        format_f64(f.residual),
                        f.points.to_string(),
                    ]
                })
                .collect();
            rows.push(vec![
                "envelope".into(),
                String::new(),
                format_f64(rep.beta_w.ln()),
                format_f64(rep.c_w.ln()),
                format_f64(rep.max_residual),
                rep.fits.iter().map(|f| f.points).sum::<usize>().to_string(),
            ]);
            Ok(Report {
                csv: render_raw(
                    &["window", "start_round", "slope", "intercept", "fit_residual", "points"],
                    rows.into_iter(),
                )?,
                status: Status::Ok,
                summary: format!(
                    "C_W = {:.6e}, beta_W = {:.6e}, max fit residual = {:.3e}",
                    rep.c_w, rep.beta_w, rep.max_residual
                ),
                warnings: Vec::new(),
            })
        }
    }
}

/// Runs the experiment and writes its CSV to `out`, or to the config's `output`.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> RunOutcome {
    let path = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| SimError::invalid("output: no output path (set `output` or pass --out)"))?;
    let report = execute(cfg)?;
    std::fs::write(&path, &report.csv)
        .map_err(|e| SimError::invalid(format!("output: cannot write {}: {e}", path.display())))?;
    Ok((report, path))
}

/// `PULM_SIM_THREADS` if set to a positive integer, else the available parallelism.
pub fn sweep_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// A finished run and the file it wrote.
pub type RunOutcome = Result<(Report, PathBuf)>;

/// Runs `cfg` once per seed, writing `<dir>/<stem>-seed<seed>.csv`. Results are in seed order.
pub fn sweep(cfg: &ExperimentConfig, seeds: &[u64], dir: &Path, threads: usize) -> Vec<(u64, RunOutcome)> {
    let stem = cfg
        .output
        .as_deref()
        .and_then(Path::file_stem)
        .and_then(|s| s.to_str())
        .unwrap_or("run")
        .to_string();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunOutcome>>> = Mutex::new(vec![None; seeds.len()]);
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(seeds.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                let run_cfg = ExperimentConfig { seed, ..cfg.clone() };
                let path = dir.join(format!("{stem}-seed{seed}.csv"));
                let r = run_experiment(&run_cfg, Some(&path));
                results.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    seeds
        .iter()
        .copied()
        .zip(results.into_inner().expect("threads joined"))
        .map(|(s, r)| (s, r.expect("every seed was run")))
        .collect()
}
