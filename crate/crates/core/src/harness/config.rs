//! Flat `key = value` experiment files with dotted keys.
//!
//! ```text
//! # consensus on a random broadcast network
//! task = consensus
//! algorithm = pulm
//! seed = 3
//! rounds = 200
//! topology.kind = random_broadcast
//! topology.n = 20
//! topology.p_c = 0.2
//! data.d = 16
//! ```
//!
//! Unknown keys, duplicates and out-of-range values are rejected with a message that starts
//! with the offending key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Result, SimError};
use crate::objectives::DEFAULT_LAMBDA;
use crate::optimization::{Anchor, RkSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Consensus,
    Optimize,
    Certify,
    Calibrate,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Consensus => "consensus",
            Task::Optimize => "optimize",
            Task::Certify => "certify",
            Task::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consensus" => Ok(Task::Consensus),
            "optimize" => Ok(Task::Optimize),
            "certify" => Ok(Task::Certify),
            "calibrate" => Ok(Task::Calibrate),
            _ => Err(field_err(
                "task",
                format!("expected consensus, optimize, certify or calibrate, got {s:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Pulm,
    PlainGossip,
    PushSum,
    PulmDgd,
    PushDiging,
    CentralizedGd,
}

impl Algorithm {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "pulm" => Algorithm::Pulm,
            "plain_gossip" => Algorithm::PlainGossip,
            "push_sum" => Algorithm::PushSum,
            "pulm_dgd" => Algorithm::PulmDgd,
            "push_diging" => Algorithm::PushDiging,
            "centralized_gd" => Algorithm::CentralizedGd,
            _ => return Err(field_err("algorithm", format!("unknown algorithm {s:?}"))),
        })
    }

    fn default_for(task: Task) -> Self {
        match task {
            Task::Optimize => Algorithm::PulmDgd,
            _ => Algorithm::Pulm,
        }
    }

    fn fits(self, task: Task) -> bool {
        match task {
            Task::Consensus => matches!(self, Algorithm::Pulm | Algorithm::PlainGossip | Algorithm::PushSum),
            Task::Optimize => matches!(
                self,
                Algorithm::PulmDgd | Algorithm::PushDiging | Algorithm::CentralizedGd
            ),
            Task::Certify | Task::Calibrate => self == Algorithm::Pulm,
        }
    }
}

/// Base graph for latent-dropout topologies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentSpec {
    /// Ring plus random extra edges up to the requested density.
    Random {
        sparsity: f64,
    },
    Ring,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaticGraph {
    Complete,
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologySpec {
    RandomBroadcast { p_c: f64 },
    LatentDropout { latent: LatentSpec, p_d: f64 },
    Static(StaticGraph),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyConfig {
    pub n: usize,
    pub spec: TopologySpec,
    /// Post-send loss probability; 0 disables loss.
    pub p_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Gaussian,
    Uniform,
}

/// Initial node values for consensus runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataConfig {
    pub d: usize,
    pub kind: InputKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveSpec {
    Logistic {
        samples: usize,
        features: usize,
        sigma_h: f64,
        lambda: f64,
    },
    Quadratic {
        features: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub gamma: f64,
    pub outer: usize,
    pub schedule: RkSchedule,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrateSpec {
    pub windows: usize,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Communication rounds for consensus and certification.
    pub rounds: usize,
    pub topology: TopologyConfig,
    pub data: DataConfig,
    pub objective: ObjectiveSpec,
    pub optimizer: OptimizerSpec,
    /// Window budget multiplier for certification (`B <= n * window`).
    pub certify_window: usize,
    pub calibrate: CalibrateSpec,
}

fn field_err(key: &str, msg: impl fmt::Display) -> SimError {
    SimError::InvalidArgument(format!("{key}: {msg}"))
}

/// Raw key/value pairs, consumed as they are read so leftovers can be reported.
struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SimError::invalid(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(SimError::invalid(format!("line {}: empty key", lineno + 1)));
            }
            if map.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(field_err(key, "set more than once"));
            }
        }
        Ok(Self { map })
    }

    fn take_str(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| field_err(key, format!("cannot parse {v:?}: {e}"))),
        }
    }

    fn take_required<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.map.remove(key).ok_or_else(|| field_err(key, "required"))?;
        v.parse()
            .map_err(|e| field_err(key, format!("cannot parse {v:?}: {e}")))
    }

    fn take_probability(&mut self, key: &str, default: f64) -> Result<f64> {
        let p: f64 = self.take(key, default)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(field_err(key, format!("probability {p} outside [0, 1]")));
        }
        Ok(p)
    }

    fn take_positive(&mut self, key: &str, default: usize) -> Result<usize> {
        let v: usize = self.take(key, default)?;
        if v == 0 {
            return Err(field_err(key, "must be >= 1"));
        }
        Ok(v)
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(field_err(k, "unknown key")),
            None => Ok(()),
        }
    }
}

impl FromStr for ExperimentConfig {
    type Err = SimError;

    fn from_str(text: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let task: Task = e.take_required("task")?;
        let algorithm = match e.take_str("algorithm") {
            Some(a) => Algorithm::parse(&a)?,
            None => Algorithm::default_for(task),
        };
        if !algorithm.fits(task) {
            return Err(field_err(
                "algorithm",
                format!("{algorithm:?} is not valid for task {task}"),
            ));
        }
        let seed = e.take("seed", 0u64)?;
        let output = e.take_str("output").map(PathBuf::from);
        let rounds = e.take("rounds", 100usize)?;

        let n = e.take_positive("topology.n", 20)?;
        let kind = e.take_str("topology.kind").unwrap_or_else(|| "random_broadcast".into());
        let spec = match kind.as_str() {
            "random_broadcast" => TopologySpec::RandomBroadcast {
                p_c: e.take_probability("topology.p_c", 0.2)?,
            },
            "latent_dropout" => {
                let latent = match e.take_str("topology.latent").as_deref().unwrap_or("random") {
                    "random" => LatentSpec::Random {
                        sparsity: e.take_probability("topology.sparsity", 0.3)?,
                    },
                    "ring" => LatentSpec::Ring,
                    "complete" => LatentSpec::Complete,
                    other => {
                        return Err(field_err(
                            "topology.latent",
                            format!("expected random, ring or complete, got {other:?}"),
                        ))
                    }
                };
                TopologySpec::LatentDropout {
                    latent,
                    p_d: e.take_probability("topology.p_d", 0.4)?,
                }
            }
            "static" => TopologySpec::Static(match e.take_str("topology.graph").as_deref().unwrap_or("complete") {
                "complete" => StaticGraph::Complete,
                "ring" => StaticGraph::Ring,
                other => {
                    return Err(field_err(
                        "topology.graph",
                        format!("expected complete or ring, got {other:?}"),
                    ))
                }
            }),
            other => {
                return Err(field_err(
                    "topology.kind",
                    format!("expected random_broadcast, latent_dropout or static, got {other:?}"),
                ))
            }
        };
        let p_t: f64 = e.take("topology.p_t", 0.0)?;
        if !(0.0..1.0).contains(&p_t) {
            return Err(field_err("topology.p_t", format!("probability {p_t} outside [0, 1)")));
        }
        let topology = TopologyConfig { n, spec, p_t };

        let data = DataConfig {
            d: e.take_positive("data.d", 1)?,
            kind: match e.take_str("data.kind").as_deref().unwrap_or("gaussian") {
                "gaussian" => InputKind::Gaussian,
                "uniform" => InputKind::Uniform,
                other => {
                    return Err(field_err(
                        "data.kind",
                        format!("expected gaussian or uniform, got {other:?}"),
                    ))
                }
            },
        };

        let objective = match e.take_str("objective.kind").as_deref().unwrap_or("logistic") {
            "logistic" => {
                let samples = e.take_positive("objective.samples", 1000)?;
                if samples < n {
                    return Err(field_err(
                        "objective.samples",
                        format!("{samples} samples cannot cover {n} nodes"),
                    ));
                }
                let sigma_h: f64 = e.take("objective.sigma_h", 0.1)?;
                if !(sigma_h >= 0.0) || !sigma_h.is_finite() {
                    return Err(field_err("objective.sigma_h", "must be finite and >= 0"));
                }
                let lambda: f64 = e.take("objective.lambda", DEFAULT_LAMBDA)?;
                if !(lambda >= 0.0) || !lambda.is_finite() {
                    return Err(field_err("objective.lambda", "must be finite and >= 0"));
                }
                ObjectiveSpec::Logistic {
                    samples,
                    features: e.take_positive("objective.features", 30)?,
                    sigma_h,
                    lambda,
                }
            }
            "quadratic" => ObjectiveSpec::Quadratic {
                features: e.take_positive("objective.features", 30)?,
            },
            other => {
                return Err(field_err(
                    "objective.kind",
                    format!("expected logistic or quadratic, got {other:?}"),
                ))
            }
        };

        let gamma: f64 = e.take("optimizer.gamma", 0.1)?;
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(field_err(
                "optimizer.gamma",
                format!("must be finite and >= 0, got {gamma}"),
            ));
        }
        let outer = e.take("optimizer.outer", 500usize)?;
        let schedule = match e.take_str("optimizer.rk").as_deref().unwrap_or("constant") {
            "constant" => RkSchedule::Constant(e.take_positive("optimizer.r", 10)?),
            "log" => {
                let c_w: f64 = e.take_required("optimizer.c_w")?;
                if !(c_w > 0.0) || !c_w.is_finite() {
                    return Err(field_err("optimizer.c_w", format!("must be finite and > 0, got {c_w}")));
                }
                let beta_w: f64 = e.take_required("optimizer.beta_w")?;
                if !(0.0..1.0).contains(&beta_w) {
                    return Err(field_err(
                        "optimizer.beta_w",
                        format!("must lie in [0, 1), got {beta_w}"),
                    ));
                }
                RkSchedule::Log { c_w, beta_w }
            }
            other => {
                return Err(field_err(
                    "optimizer.rk",
                    format!("expected constant or log, got {other:?}"),
                ))
            }
        };
        let anchor = match e.take_str("optimizer.anchor") {
            Some(a) => a.parse()?,
            None => Anchor::ScaledGradient,
        };
        let optimizer = OptimizerSpec {
            gamma,
            outer,
            schedule,
            anchor,
        };

        let certify_window = e.take_positive("certify.window", 1)?;
        let calibrate = CalibrateSpec {
            windows: e.take_positive("calibrate.windows", 10)?,
            rounds: e.take_positive("calibrate.rounds", 50)?,
        };
        if task == Task::Certify && rounds < n * certify_window {
            return Err(field_err(
                "rounds",
                format!(
                    "certification needs at least n * certify.window = {} rounds",
                    n * certify_window
                ),
            ));
        }
        e.finish()?;
        Ok(Self {
            task,
            algorithm,
            seed,
            output,
            rounds,
            topology,
            data,
            objective,
            optimizer,
            certify_window,
            calibrate,
        })
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::invalid(format!("cannot read config {}: {e}", path.display())))?;
        text.parse()
    }
}
