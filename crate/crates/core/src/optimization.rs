//! PULM-DGD, push-DIGing and centralized gradient descent.
//!
//! Every outer round of PULM-DGD computes local gradients, seeds an inner PULM run with
//! `z_i = x_i - gamma g_i, w_i = e_i`, runs `R_k` communication rounds and takes `x_i` from the
//! final `z_i`. What the adjust step charges the drift against is selected by [`Anchor`].

use std::str::FromStr;

use crate::consensus::{Pulm, WEIGHT_FLOOR};
use crate::error::{Result, SimError};
use crate::linalg::{axpy, norm_sq, Matrix};
use crate::mixing::column_stochastic_from_intended;
use crate::objectives::Objective;
use crate::topology::Network;
use crate::trace::{Status, TrajectoryRecord};

/// Inner round count per outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RkSchedule {
    Constant(usize),
    /// `max(1, ceil(max(ln C_W, ln max(k, 1)) / (1 - beta_W)))`.
    Log {
        c_w: f64,
        beta_w: f64,
    },
}

impl RkSchedule {
    pub fn rounds(&self, k: usize) -> usize {
        match *self {
            RkSchedule::Constant(r) => r,
            RkSchedule::Log { c_w, beta_w } => {
                let num = c_w.ln().max((k.max(1) as f64).ln());
                ((num / (1.0 - beta_w)).ceil() as usize).max(1)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            RkSchedule::Constant(0) => Err(SimError::invalid("optimizer.r: constant R must be >= 1")),
            RkSchedule::Constant(_) => Ok(()),
            RkSchedule::Log { c_w, beta_w } => {
                if !(c_w > 0.0) || !c_w.is_finite() {
                    return Err(SimError::invalid(format!(
                        "optimizer.c_w: must be finite and > 0, got {c_w}"
                    )));
                }
                if !(0.0..1.0).contains(&beta_w) {
                    return Err(SimError::invalid(format!(
                        "optimizer.beta_w: must lie in [0, 1), got {beta_w}"
                    )));
                }
                Ok(())
            }
        }
    }
}

pub fn rk_schedule(k: usize, cfg: &OptimizerConfig) -> usize {
    cfg.schedule.rounds(k)
}

/// Vector the inner adjust step subtracts, scaled by the node's drift.
///
/// With seed `z0 = x - gamma g`, plain-gossip product `Phi` and distribution matrix `W`, the
/// inner run ends at `W a + Phi (z0 - a)` for anchor `a`:
///
/// - `Gradient` (`a = g`): `W g + Phi (x - (1 + gamma) g)`.
/// - `ScaledGradient` (`a = -gamma g`): `Phi x - gamma W g`. Parameters are gossiped, gradients
///   are averaged exactly.
/// - `SeededState` (`a = z0`): `W (x - gamma g)`. Everything is averaged exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Anchor {
    Gradient,
    ScaledGradient,
    SeededState,
}

impl Anchor {
    pub fn as_str(self) -> &'static str {
        match self {
            Anchor::Gradient => "gradient",
            Anchor::ScaledGradient => "scaled_gradient",
            Anchor::SeededState => "seeded_state",
        }
    }
}

impl FromStr for Anchor {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(Anchor::Gradient),
            "scaled_gradient" => Ok(Anchor::ScaledGradient),
            "seeded_state" => Ok(Anchor::SeededState),
            other => Err(SimError::invalid(format!(
                "optimizer.anchor: expected gradient, scaled_gradient or seeded_state, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub gamma: f64,
    pub outer_rounds: usize,
    pub schedule: RkSchedule,
    pub anchor: Anchor,
    /// Keep every outer iterate in [`Trajectory::iterates`].
    pub record_iterates: bool,
}

impl OptimizerConfig {
    pub fn new(gamma: f64, outer_rounds: usize, schedule: RkSchedule) -> Self {
        Self {
            gamma,
            outer_rounds,
            schedule,
            anchor: Anchor::ScaledGradient,
            record_iterates: false,
        }
    }

    pub fn with_anchor(mut self, anchor: Anchor) -> Self {
        self.anchor = anchor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(SimError::invalid(format!(
                "optimizer.gamma: must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        self.schedule.validate()
    }
}

/// Output of an optimizer run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// One record per outer index `0..=completed`.
    pub records: Vec<TrajectoryRecord>,
    /// Node-average iterate at each record.
    pub means: Vec<Vec<f64>>,
    /// Full `n x dim` iterates at each record, if requested.
    pub iterates: Vec<Matrix>,
    pub final_params: Matrix,
    pub status: Status,
    pub collapsed_nodes: Vec<usize>,
}

impl Trajectory {
    fn new() -> Self {
        Self {
            records: Vec::new(),
            means: Vec::new(),
            iterates: Vec::new(),
            final_params: Matrix::zeros(0, 0),
            status: Status::Ok,
            collapsed_nodes: Vec::new(),
        }
    }

    fn push(
        &mut self,
        obj: &dyn Objective,
        outer_k: usize,
        inner_total: usize,
        x: &Matrix,
        keep: bool,
        status: Status,
    ) {
        let mean = x.column_means();
        self.records.push(TrajectoryRecord {
            outer_k,
            inner_total,
            loss_mean: obj.value(&mean),
            grad_norm_sq: norm_sq(&obj.grad(&mean)),
            param_consensus_error: param_consensus_error(x),
            status,
        });
        self.means.push(mean);
        if keep {
            self.iterates.push(x.clone());
        }
        self.status = status;
    }

    pub fn total_inner(&self) -> usize {
        self.records.last().map_or(0, |r| r.inner_total)
    }
}

/// `sqrt((1/d) sum_j ((1/n) sum_i (x_ij - xbar_j)^2)^2)`.
pub fn param_consensus_error(x: &Matrix) -> f64 {
    let n = x.rows() as f64;
    let mean = x.column_means();
    let per_dim: f64 = (0..x.cols())
        .map(|j| {
            let var = x.row_iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            var * var
        })
        .sum();
    (per_dim / x.cols() as f64).sqrt()
}

fn local_grads(obj: &dyn Objective, x: &Matrix) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| obj.local_grad(i, x.row(i))).collect();
    Matrix::from_rows(&rows).expect("gradients share a length")
}

fn check_setup(obj: &dyn Objective, net: &Network, x0: &[f64]) -> Result<()> {
    if obj.nodes() != net.node_count() {
        return Err(SimError::invalid(format!(
            "objective has {} nodes, network has {}",
            obj.nodes(),
            net.node_count()
        )));
    }
    if x0.len() != obj.dim() {
        return Err(SimError::invalid(format!(
            "x0 has length {}, objective dimension is {}",
            x0.len(),
            obj.dim()
        )));
    }
    Ok(())
}

fn broadcast(n: usize, x0: &[f64]) -> Matrix {
    Matrix::from_fn(n, x0.len(), |_, j| x0[j])
}

/// PULM-DGD from the common starting point `x0`. Communication round `t` of the network is
/// consumed by the `t`-th inner round overall.
pub fn pulm_dgd_run(obj: &dyn Objective, net: &Network, cfg: &OptimizerConfig, x0: &[f64]) -> Result<Trajectory> {
    cfg.validate()?;
    check_setup(obj, net, x0)?;
    let n = obj.nodes();
    let mut x = broadcast(n, x0);
    let mut traj = Trajectory::new();
    let mut t = 0usize;
    for k in 0..cfg.outer_rounds {
        let g = local_grads(obj, &x);
        if !g.is_finite() {
            traj.push(obj, k, t, &x, cfg.record_iterates, Status::Diverged);
            traj.final_params = x;
            return Ok(traj);
        }
        traj.push(obj, k, t, &x, cfg.record_iterates, Status::Ok);
        let z0 = x.sub(&g.scale(cfg.gamma))?;
        let anchor = match cfg.anchor {
            Anchor::Gradient => g,
            Anchor::ScaledGradient => g.scale(-cfg.gamma),
            Anchor::SeededState => z0.clone(),
        };
        let mut inner = Pulm::with_anchor(&z0, &anchor)?;
        for _ in 0..cfg.schedule.rounds(k) {
            inner.step_graph(&net.round(t as u64).effective)?;
            t += 1;
        }
        x = inner.values();
        if !x.is_finite() {
            traj.push(obj, k + 1, t, &x, cfg.record_iterates, Status::Diverged);
            traj.final_params = x;
            return Ok(traj);
        }
    }
    traj.push(obj, cfg.outer_rounds, t, &x, cfg.record_iterates, Status::Ok);
    traj.final_params = x;
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushDigingConfig {
    pub alpha: f64,
    /// Communication rounds.
    pub rounds: usize,
    /// Emit a record every this many rounds; `outer_k` counts records.
    pub record_every: usize,
}

/// Push-DIGing with column weights from the intended graphs; lost shares vanish.
///
/// `u' = C (u - alpha y)`, `v' = C v`, `z = u / v`, `y' = C y + grad f(z') - grad f(z)`.
pub fn push_diging_run(obj: &dyn Objective, net: &Network, cfg: &PushDigingConfig, x0: &[f64]) -> Result<Trajectory> {
    check_setup(obj, net, x0)?;
    if !(cfg.alpha >= 0.0) || !cfg.alpha.is_finite() {
        return Err(SimError::invalid(format!(
            "optimizer.gamma: must be finite and >= 0, got {}",
            cfg.alpha
        )));
    }
    if cfg.record_every == 0 {
        return Err(SimError::invalid("record_every must be >= 1"));
    }
    let n = obj.nodes();
    let mut u = broadcast(n, x0);
    let mut v = vec![1.0; n];
    let mut z = u.clone();
    let mut grad = local_grads(obj, &z);
    let mut y = grad.clone();
    let mut traj = Trajectory::new();
    traj.push(obj, 0, 0, &z, false, Status::Ok);
    for t in 0..cfg.rounds {
        let graphs = net.round(t as u64);
        let c = column_stochastic_from_intended(&graphs.intended, &graphs.effective)?;
        let c = c.entries();
        let mut step = u.clone();
        for i in 0..n {
            axpy(-cfg.alpha, y.row(i), step.row_mut(i));
        }
        u = c.matmul(&step)?;
        v = c.mul_vec(&v)?;
        let collapsed: Vec<usize> = (0..n).filter(|&i| !(v[i] >= WEIGHT_FLOOR)).collect();
        z = Matrix::from_fn(n, u.cols(), |i, j| u[(i, j)] / v[i]);
        let status = if !collapsed.is_empty() {
            Status::NumericalCollapse
        } else if !z.is_finite() {
            Status::Diverged
        } else {
            Status::Ok
        };
        if !status.is_ok() {
            traj.push(obj, (t + 1).div_ceil(cfg.record_every), t + 1, &z, false, status);
            traj.collapsed_nodes = collapsed;
            traj.final_params = z;
            return Ok(traj);
        }
        let next_grad = local_grads(obj, &z);
        y = c.matmul(&y)?.add(&next_grad)?.sub(&grad)?;
        grad = next_grad;
        if (t + 1) % cfg.record_every == 0 {
            let status = if y.is_finite() { Status::Ok } else { Status::Diverged };
            traj.push(obj, (t + 1) / cfg.record_every, t + 1, &z, false, status);
            if !status.is_ok() {
                traj.final_params = z;
                return Ok(traj);
            }
        }
    }
    traj.final_params = z;
    Ok(traj)
}

/// `x' = x - gamma grad f(x)` on the global objective. Runs on a single row.
pub fn centralized_gd_run(obj: &dyn Objective, gamma: f64, outer_rounds: usize, x0: &[f64]) -> Result<Trajectory> {
    if x0.len() != obj.dim() {
        return Err(SimError::invalid(format!(
            "x0 has length {}, objective dimension is {}",
            x0.len(),
            obj.dim()
        )));
    }
    let mut x = x0.to_vec();
    let mut traj = Trajectory::new();
    for k in 0..outer_rounds {
        let row = Matrix::from_rows(&[&x]).expect("one row");
        traj.push(obj, k, 0, &row, true, Status::Ok);
        let g = obj.grad(&x);
        axpy(-gamma, &g, &mut x);
        if x.iter().any(|c| !c.is_finite()) {
            let row = Matrix::from_rows(&[&x]).expect("one row");
            traj.push(obj, k + 1, 0, &row, true, Status::Diverged);
            traj.final_params = row;
            return Ok(traj);
        }
    }
    let row = Matrix::from_rows(&[&x]).expect("one row");
    traj.push(obj, outer_rounds, 0, &row, true, Status::Ok);
    traj.final_params = row;
    Ok(traj)
}

/// Constants entering the stationarity bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessEstimate {
    /// Lipschitz constant of every local gradient.
    pub l: f64,
    /// Upper bound on `f_i(x0) - inf f_i` over all nodes.
    pub delta: f64,
}

impl SmoothnessEstimate {
    /// `L` from the objective; `Delta = max_i f_i(x0) - lower_bound`, which dominates the true
    /// gap because the lower bound is at most `inf f_i`.
    pub fn from_objective(obj: &dyn Objective, x0: &[f64]) -> Self {
        let worst = (0..obj.nodes())
            .map(|i| obj.local_value(i, x0))
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            l: obj.smoothness(),
            delta: (worst - obj.lower_bound()).max(0.0),
        }
    }
}

/// Largest step size the stationarity bound admits: `1 / (24 n C_W^2 L)`.
pub fn max_guaranteed_step(n: usize, c_w: f64, l: f64) -> f64 {
    1.0 / (24.0 * n as f64 * c_w * c_w * l)
}

/// Outcome of [`rate_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// `None` when the hypotheses hold; otherwise why the bound does not apply.
    pub not_applicable: Option<String>,
    /// Largest `(prefix mean of ||grad f||^2) / (18 Delta / (gamma K))` over all prefixes.
    pub worst_ratio: f64,
    /// First prefix length `K` where the bound fails.
    pub first_violation: Option<usize>,
    pub total_inner: usize,
    /// `max(K ln K, K ln C_W) / (1 - beta_W) + K`.
    pub comm_bound: f64,
    pub prefixes_checked: usize,
}

impl RateReport {
    pub fn bound_holds(&self) -> bool {
        self.not_applicable.is_none() && self.first_violation.is_none()
    }

    pub fn comm_within_bound(&self) -> bool {
        self.not_applicable.is_none() && self.total_inner as f64 <= self.comm_bound
    }
}

/// Checks `(1/K) sum_{k<K} ||grad f(xbar_k)||^2 <= 18 Delta / (gamma K)` for every prefix, and the
/// total communication against its bound. Reports "not applicable" when the step size or
/// schedule falls outside the hypotheses.
pub fn rate_check(traj: &Trajectory, est: &SmoothnessEstimate, cfg: &OptimizerConfig, n: usize) -> RateReport {
    let mut report = RateReport {
        not_applicable: None,
        worst_ratio: 0.0,
        first_violation: None,
        total_inner: traj.total_inner(),
        comm_bound: f64::INFINITY,
        prefixes_checked: 0,
    };
    let (c_w, beta_w) = match cfg.schedule {
        RkSchedule::Log { c_w, beta_w } => (c_w, beta_w),
        RkSchedule::Constant(_) => {
            report.not_applicable = Some("bound not applicable: needs the logarithmic R_k schedule".into());
            return report;
        }
    };
    if !(cfg.gamma > 0.0) {
        report.not_applicable = Some("bound not applicable: gamma must be positive".into());
        return report;
    }
    let gamma_max = max_guaranteed_step(n, c_w, est.l);
    if cfg.gamma > gamma_max {
        report.not_applicable = Some(format!(
            "bound not applicable: gamma = {} exceeds 1/(24 n C_W^2 L) = {gamma_max}",
            cfg.gamma
        ));
        return report;
    }
    if !traj.status.is_ok() {
        report.not_applicable = Some(format!("bound not applicable: run ended with status {}", traj.status));
        return report;
    }
    let outer = traj.records.len().saturating_sub(1);
    let mut sum = 0.0;
    for kk in 1..=outer {
        sum += traj.records[kk - 1].grad_norm_sq;
        let mean = sum / kk as f64;
        let bound = 18.0 * est.delta / (cfg.gamma * kk as f64);
        let ratio = mean / bound;
        report.worst_ratio = report.worst_ratio.max(ratio);
        if ratio > 1.0 && report.first_violation.is_none() {
            report.first_violation = Some(kk);
        }
    }
    report.prefixes_checked = outer;
    let kf = outer as f64;
    report.comm_bound = (kf * kf.max(1.0).ln()).max(kf * c_w.ln()) / (1.0 - beta_w) + kf;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{gen_synthetic_logistic, QuadraticObjective};
    use crate::topology::{DirectedGraph, PacketLossModel, TopologyModel};
    use approx::assert_abs_diff_eq;

    fn complete(n: usize) -> Network {
        Network::new(TopologyModel::fixed(DirectedGraph::complete(n)))
    }

    #[test]
    fn schedule_examples() {
        let log = |c_w: f64| RkSchedule::Log { c_w, beta_w: 0.5 };
        assert_eq!(log(1.0).rounds(1), 1);
        assert_eq!(log(1.0).rounds(0), 1);
        assert_eq!(log(std::f64::consts::E).rounds(1), 2);
        assert_eq!(RkSchedule::Constant(10).rounds(12345), 10);
        // ln 100 / 0.5 = 9.21 -> 10
        assert_eq!(log(1.0).rounds(100), 10);
    }

    #[test]
    fn config_validation_names_fields() {
        let bad = OptimizerConfig::new(-1.0, 5, RkSchedule::Constant(1));
        assert!(bad.validate().unwrap_err().to_string().contains("optimizer.gamma"));
        let bad = OptimizerConfig::new(0.1, 5, RkSchedule::Constant(0));
        assert!(bad.validate().unwrap_err().to_string().contains("optimizer.r"));
        let bad = OptimizerConfig::new(0.1, 5, RkSchedule::Log { c_w: 2.0, beta_w: 1.0 });
        assert!(bad.validate().unwrap_err().to_string().contains("optimizer.beta_w"));
        assert!("push".parse::<Anchor>().is_err());
        assert_eq!("seeded_state".parse::<Anchor>().unwrap(), Anchor::SeededState);
    }

    #[test]
    fn param_consensus_error_examples() {
        assert_eq!(param_consensus_error(&Matrix::filled(3, 2, 1.5)), 0.0);
        let x = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        assert_abs_diff_eq!(param_consensus_error(&x), 1.0);
        assert_abs_diff_eq!(param_consensus_error(&x.scale(3.0)), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn complete_graph_matches_centralized_gd() {
        let q = QuadraticObjective::random(5, 4, 7).unwrap();
        let x0 = vec![0.3, -1.0, 2.0, 0.0];
        for anchor in [Anchor::Gradient, Anchor::ScaledGradient, Anchor::SeededState] {
            let mut cfg = OptimizerConfig::new(0.3, 100, RkSchedule::Constant(1)).with_anchor(anchor);
            cfg.record_iterates = true;
            let dgd = pulm_dgd_run(&q, &complete(5), &cfg, &x0).unwrap();
            let gd = centralized_gd_run(&q, 0.3, 100, &x0).unwrap();
            for (xs, c) in dgd.iterates.iter().zip(&gd.means) {
                for row in xs.row_iter() {
                    for (a, b) in row.iter().zip(c) {
                        assert!((a - b).abs() <= 1e-9, "{anchor:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_step_keeps_a_consensual_start() {
        let data = gen_synthetic_logistic(4, 40, 3, 0.1, 2).unwrap();
        let net = Network::new(TopologyModel::random_broadcast(4, 0.5, 1).unwrap());
        let x0 = vec![0.5, -0.5, 1.0, 0.25];
        let run = |anchor, r| {
            let cfg = OptimizerConfig::new(0.0, 20, RkSchedule::Constant(r)).with_anchor(anchor);
            pulm_dgd_run(&data, &net, &cfg, &x0).unwrap().final_params
        };
        // With a zero anchor the inner run is plain gossip, which fixes consensual states.
        for row in run(Anchor::ScaledGradient, 3).row_iter() {
            assert_eq!(row, x0.as_slice());
        }
        // W x0 only reaches x0 once W is close to E_n.
        for row in run(Anchor::SeededState, 200).row_iter() {
            for (a, b) in row.iter().zip(&x0) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn centralized_gd_examples() {
        let q = QuadraticObjective::new(Matrix::from_rows(&[[1.0, 2.0], [3.0, -2.0]]).unwrap()).unwrap();
        let traj = centralized_gd_run(&q, 1.0, 1, &[10.0, 10.0]).unwrap();
        assert_eq!(traj.means[1], vec![2.0, 0.0]);
        let frozen = centralized_gd_run(&q, 0.0, 5, &[1.0, 1.0]).unwrap();
        assert!(frozen.means.iter().all(|m| m == &vec![1.0, 1.0]));
    }

    #[test]
    fn push_diging_solves_a_quadratic_without_loss() {
        let q = QuadraticObjective::random(6, 3, 4).unwrap();
        let net = Network::new(TopologyModel::fixed(DirectedGraph::ring(6)));
        let cfg = PushDigingConfig {
            alpha: 0.1,
            rounds: 1000,
            record_every: 10,
        };
        let traj = push_diging_run(&q, &net, &cfg, &[0.0; 3]).unwrap();
        assert!(traj.status.is_ok());
        let star = q.minimizer();
        for row in traj.final_params.row_iter() {
            for (a, b) in row.iter().zip(&star) {
                assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
        assert_eq!(traj.records.len(), 101);
    }

    #[test]
    fn push_diging_with_zero_step_settles_at_x0() {
        let q = QuadraticObjective::random(4, 2, 4).unwrap();
        let net = Network::new(TopologyModel::random_broadcast(4, 0.5, 3).unwrap());
        let cfg = PushDigingConfig {
            alpha: 0.0,
            rounds: 200,
            record_every: 50,
        };
        let traj = push_diging_run(&q, &net, &cfg, &[1.0, -1.0]).unwrap();
        for row in traj.final_params.row_iter() {
            assert_abs_diff_eq!(row[0], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(row[1], -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn push_diging_collapse_is_flagged() {
        let q = QuadraticObjective::random(4, 2, 4).unwrap();
        let topo = TopologyModel::fixed(DirectedGraph::complete(4));
        let net = Network::new(topo).with_loss(PacketLossModel::new(0.999_999_999, 1).unwrap());
        // alpha = 0 isolates the weight decay from the gradient dynamics.
        let cfg = PushDigingConfig {
            alpha: 0.0,
            rounds: 2000,
            record_every: 10,
        };
        let traj = push_diging_run(&q, &net, &cfg, &[0.0, 0.0]).unwrap();
        assert_eq!(traj.status, Status::NumericalCollapse);
        assert_eq!(traj.collapsed_nodes.len(), 4);
    }

    #[test]
    fn rate_check_on_a_conservative_quadratic_run() {
        let q = QuadraticObjective::random(4, 3, 1).unwrap();
        let x0 = [1.0, 1.0, 1.0];
        let sched = RkSchedule::Log { c_w: 1.0, beta_w: 1e-6 };
        let est = SmoothnessEstimate::from_objective(&q, &x0);
        let gamma = max_guaranteed_step(4, 1.0, est.l);
        let cfg = OptimizerConfig::new(gamma, 50, sched);
        let traj = pulm_dgd_run(&q, &complete(4), &cfg, &x0).unwrap();
        let report = rate_check(&traj, &est, &cfg, 4);
        assert!(report.bound_holds(), "{report:?}");
        assert!(report.worst_ratio < 0.1);
        assert!(report.comm_within_bound());
        assert_eq!(report.prefixes_checked, 50);
    }

    #[test]
    fn rate_check_refuses_unmet_hypotheses() {
        let q = QuadraticObjective::random(4, 3, 1).unwrap();
        let x0 = [0.0; 3];
        let est = SmoothnessEstimate::from_objective(&q, &x0);
        let cfg = OptimizerConfig::new(0.5, 5, RkSchedule::Constant(2));
        let traj = pulm_dgd_run(&q, &complete(4), &cfg, &x0).unwrap();
        let r = rate_check(&traj, &est, &cfg, 4);
        assert!(r.not_applicable.unwrap().contains("not applicable"));
        let cfg = OptimizerConfig::new(0.5, 5, RkSchedule::Log { c_w: 1.0, beta_w: 0.5 });
        let r = rate_check(&traj, &est, &cfg, 4);
        assert!(r.not_applicable.unwrap().contains("exceeds"));
    }

    #[test]
    fn total_communication_follows_the_schedule() {
        let q = QuadraticObjective::random(3, 2, 1).unwrap();
        let sched = RkSchedule::Log { c_w: 2.0, beta_w: 0.5 };
        let cfg = OptimizerConfig::new(0.01, 30, sched);
        let traj = pulm_dgd_run(&q, &complete(3), &cfg, &[0.0, 0.0]).unwrap();
        let expect: usize = (0..30).map(|k| sched.rounds(k)).sum();
        assert_eq!(traj.total_inner(), expect);
        assert_eq!(traj.records.len(), 31);
    }
}
