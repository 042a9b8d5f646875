//! Average consensus over time-varying broadcast networks.
//!
//! PULM ("pull, then adjust") runs two gossip streams per node: a value `z_i` and a
//! distribution row `w_i` that starts as `e_i`. After each pull, node `i` measures how far
//! its own weight `w_i[i]` has drifted from `1/n` and subtracts that drift times its
//! anchor from `z_i` and times `e_i` from `w_i`. Stacking the rows gives the matrix
//! recursion `W' = A W` followed by `diag(W') := 1/n`, and `z = W x` holds every round.
//!
//! Plain pull gossip and push-sum are provided as baselines.

use crate::error::{Result, SimError};
use crate::linalg::{axpy, Matrix};
use crate::mixing::{column_stochastic_from_intended, row_stochastic_from_graph, MixingMatrix, Stochasticity};
use crate::topology::{DirectedGraph, Network};
use crate::trace::{ConsensusRecord, Status};

/// Push-sum weights below this are treated as lost to underflow.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// `W^(k)` from the matrix-level recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionMatrix {
    w: Matrix,
    round: usize,
}

impl DistributionMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            w: Matrix::identity(n),
            round: 0,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn into_matrix(self) -> Matrix {
        self.w
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn size(&self) -> usize {
        self.w.rows()
    }

    /// One adjust-gossip step: `W' = A W`, then every diagonal entry reset to `1/n`.
    pub fn step(&self, a: &MixingMatrix) -> Result<Self> {
        matrix_level_step(self, a)
    }

    /// `max_ij |W_ij - 1/n|`. Non-increasing along the recursion.
    pub fn max_deviation(&self) -> f64 {
        max_deviation(&self.w)
    }

    pub fn w_error(&self) -> f64 {
        w_error(&self.w)
    }
}

pub fn matrix_level_step(w: &DistributionMatrix, a: &MixingMatrix) -> Result<DistributionMatrix> {
    let n = w.size();
    if a.size() != n {
        return Err(SimError::invalid(format!(
            "mixing matrix is {0}x{0}, distribution matrix is {n}x{n}",
            a.size()
        )));
    }
    if a.stochasticity() != Stochasticity::Row {
        return Err(SimError::invalid("adjust-gossip needs a row-stochastic matrix"));
    }
    let mut next = a.entries().matmul(&w.w)?;
    let target = 1.0 / n as f64;
    for i in 0..n {
        next[(i, i)] = target;
    }
    Ok(DistributionMatrix {
        w: next,
        round: w.round + 1,
    })
}

/// `||W - E_n||_F`.
pub fn w_error(w: &Matrix) -> f64 {
    let target = 1.0 / w.rows() as f64;
    w.as_slice().iter().map(|v| (v - target).powi(2)).sum::<f64>().sqrt()
}

pub fn max_deviation(w: &Matrix) -> f64 {
    let target = 1.0 / w.rows() as f64;
    w.as_slice().iter().fold(0.0, |m, v| m.max((v - target).abs()))
}

/// `||z - E_n x||_F / ||x - E_n x||_F`.
pub fn consensus_error(z: &Matrix, x: &Matrix) -> Result<f64> {
    if z.rows() != x.rows() || z.cols() != x.cols() {
        return Err(SimError::invalid("value and input matrices differ in shape"));
    }
    let mean = x.column_means();
    let dist = |m: &Matrix| -> f64 {
        m.row_iter()
            .flat_map(|r| r.iter().zip(&mean).map(|(v, c)| (v - c).powi(2)))
            .sum::<f64>()
            .sqrt()
    };
    let denom = dist(x);
    if denom == 0.0 {
        return Err(SimError::UndefinedMetric(
            "consensus error of an already-consensual input",
        ));
    }
    Ok(dist(z) / denom)
}

/// Largest per-coordinate gap `max_j (max_i z_ij - min_i z_ij)`.
pub fn spread(z: &Matrix) -> f64 {
    (0..z.cols())
        .map(|j| {
            let col = z.column(j);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// What node `sender` broadcast this round.
#[derive(Debug, Clone, Copy)]
pub struct PulmMessage<'a> {
    pub sender: usize,
    pub z: &'a [f64],
    pub w: &'a [f64],
}

/// Local state of one PULM node.
#[derive(Debug, Clone, PartialEq)]
pub struct PulmNodeState {
    pub id: usize,
    pub z: Vec<f64>,
    /// Row `id` of the distribution matrix.
    pub w: Vec<f64>,
    /// Vector the drift is charged against. The node's initial value for plain consensus.
    pub anchor: Vec<f64>,
}

impl PulmNodeState {
    pub fn new(id: usize, n: usize, x0: Vec<f64>) -> Self {
        let mut w = vec![0.0; n];
        w[id] = 1.0;
        Self {
            id,
            z: x0.clone(),
            w,
            anchor: x0,
        }
    }

    pub fn with_anchor(id: usize, n: usize, z0: Vec<f64>, anchor: Vec<f64>) -> Self {
        let mut s = Self::new(id, n, z0);
        s.anchor = anchor;
        s
    }

    /// One pull-and-adjust round. `weights` is row `id` of the mixing matrix; every
    /// positively weighted sender must appear in `inbox`.
    pub fn step(&self, inbox: &[PulmMessage<'_>], weights: &[f64]) -> Result<Self> {
        pulm_step(self, inbox, weights)
    }
}

pub fn pulm_step(state: &PulmNodeState, inbox: &[PulmMessage<'_>], weights: &[f64]) -> Result<PulmNodeState> {
    let n = state.w.len();
    let d = state.z.len();
    if weights.len() != n {
        return Err(SimError::invalid(format!(
            "weight row has length {}, expected {n}",
            weights.len()
        )));
    }
    if weights.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
        return Err(SimError::invalid("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(SimError::invalid(format!("weights sum to {total}, expected 1")));
    }
    let mut by_sender: Vec<Option<&PulmMessage<'_>>> = vec![None; n];
    for m in inbox {
        if m.sender >= n || m.z.len() != d || m.w.len() != n {
            return Err(SimError::invalid(format!("malformed message from sender {}", m.sender)));
        }
        if by_sender[m.sender].replace(m).is_some() {
            return Err(SimError::invalid(format!("duplicate message from sender {}", m.sender)));
        }
    }
    let mut z = vec![0.0; d];
    let mut w = vec![0.0; n];
    for (j, &a) in weights.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let m = by_sender[j].ok_or(SimError::ProtocolViolation {
            node: state.id,
            sender: j,
        })?;
        axpy(a, m.z, &mut z);
        axpy(a, m.w, &mut w);
    }
    let drift = w[state.id] - 1.0 / n as f64;
    axpy(-drift, &state.anchor, &mut z);
    w[state.id] -= drift;
    Ok(PulmNodeState {
        id: state.id,
        z,
        w,
        anchor: state.anchor.clone(),
    })
}

/// Node-wise PULM over all `n` nodes, double-buffered.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulm {
    nodes: Vec<PulmNodeState>,
    round: usize,
}

impl Pulm {
    /// Every node starts from its row of `x` and anchors on it.
    pub fn new(x: &Matrix) -> Self {
        let n = x.rows();
        let nodes = (0..n).map(|i| PulmNodeState::new(i, n, x.row(i).to_vec())).collect();
        Self { nodes, round: 0 }
    }

    /// Start from `z0` with drift charged against `anchor`.
    pub fn with_anchor(z0: &Matrix, anchor: &Matrix) -> Result<Self> {
        if z0.rows() != anchor.rows() || z0.cols() != anchor.cols() {
            return Err(SimError::invalid("initial values and anchors differ in shape"));
        }
        let n = z0.rows();
        let nodes = (0..n)
            .map(|i| PulmNodeState::with_anchor(i, n, z0.row(i).to_vec(), anchor.row(i).to_vec()))
            .collect();
        Ok(Self { nodes, round: 0 })
    }

    pub fn nodes(&self) -> &[PulmNodeState] {
        &self.nodes
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Each node pulls from its in-neighbours in `effective`, weighting them uniformly.
    /// Returns the realised mixing matrix.
    pub fn step_graph(&mut self, effective: &DirectedGraph) -> Result<MixingMatrix> {
        let a = row_stochastic_from_graph(effective);
        self.advance(&a, |i| effective.in_neighbors(i).collect())?;
        Ok(a)
    }

    /// Pull with arbitrary row-stochastic weights; the support of row `i` is node `i`'s inbox.
    pub fn step_matrix(&mut self, a: &MixingMatrix) -> Result<()> {
        if a.stochasticity() != Stochasticity::Row {
            return Err(SimError::invalid("PULM needs a row-stochastic matrix"));
        }
        self.advance(a, |i| (0..a.size()).filter(|&j| a.get(i, j) > 0.0).collect())
    }

    fn advance(&mut self, a: &MixingMatrix, senders: impl Fn(usize) -> Vec<usize>) -> Result<()> {
        if a.size() != self.nodes.len() {
            return Err(SimError::invalid("mixing matrix size does not match node count"));
        }
        let next = self
            .nodes
            .iter()
            .map(|s| {
                let inbox: Vec<PulmMessage<'_>> = senders(s.id)
                    .into_iter()
                    .map(|j| PulmMessage {
                        sender: j,
                        z: &self.nodes[j].z,
                        w: &self.nodes[j].w,
                    })
                    .collect();
                s.step(&inbox, a.row(s.id))
            })
            .collect::<Result<Vec<_>>>()?;
        self.nodes = next;
        self.round += 1;
        Ok(())
    }

    pub fn values(&self) -> Matrix {
        stack(self.nodes.iter().map(|s| s.z.as_slice()))
    }

    pub fn distribution(&self) -> DistributionMatrix {
        DistributionMatrix {
            w: stack(self.nodes.iter().map(|s| s.w.as_slice())),
            round: self.round,
        }
    }
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Matrix {
    let rows: Vec<&[f64]> = rows.collect();
    Matrix::from_rows(&rows).expect("node vectors share a length")
}

/// Pull gossip without adjustment: `z' = A z`. Converges to `pi^T x`, not the average.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainGossip {
    z: Matrix,
    product: Matrix,
}

impl PlainGossip {
    pub fn new(x: &Matrix) -> Self {
        Self {
            z: x.clone(),
            product: Matrix::identity(x.rows()),
        }
    }

    pub fn step_matrix(&mut self, a: &MixingMatrix) -> Result<()> {
        if a.stochasticity() != Stochasticity::Row {
            return Err(SimError::invalid("plain gossip needs a row-stochastic matrix"));
        }
        self.z = a.entries().matmul(&self.z)?;
        self.product = a.entries().matmul(&self.product)?;
        Ok(())
    }

    pub fn values(&self) -> &Matrix {
        &self.z
    }

    /// The accumulated product `A^(k-1) ... A^(0)`, so that `z = product * x`.
    pub fn product(&self) -> &Matrix {
        &self.product
    }
}

/// Push-sum with column weights `1 / d_out` over intended out-edges; lost shares vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct PushSum {
    v: Matrix,
    weight: Vec<f64>,
    product: Matrix,
}

impl PushSum {
    pub fn new(x: &Matrix) -> Self {
        Self {
            v: x.clone(),
            weight: vec![1.0; x.rows()],
            product: Matrix::identity(x.rows()),
        }
    }

    /// One push round. Returns the realised column matrix.
    pub fn step_graphs(&mut self, intended: &DirectedGraph, effective: &DirectedGraph) -> Result<MixingMatrix> {
        let b = column_stochastic_from_intended(intended, effective)?;
        let n = self.weight.len();
        let d = self.v.cols();
        let mut v = Matrix::zeros(n, d);
        let mut weight = vec![0.0; n];
        for j in 0..n {
            let share = 1.0 / intended.out_degree(j) as f64;
            for i in effective.out_neighbors(j) {
                axpy(share, self.v.row(j), v.row_mut(i));
                weight[i] += share * self.weight[j];
            }
        }
        self.v = v;
        self.weight = weight;
        self.product = b.entries().matmul(&self.product)?;
        Ok(b)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight.iter().sum()
    }

    /// Nodes whose weight has fallen below [`WEIGHT_FLOOR`].
    pub fn collapsed_nodes(&self) -> Vec<usize> {
        (0..self.weight.len())
            .filter(|&i| !(self.weight[i] >= WEIGHT_FLOOR))
            .collect()
    }

    /// Ratio estimates `v_i / weight_i`.
    pub fn values(&self) -> Matrix {
        let mut z = self.v.clone();
        for (i, &wt) in self.weight.iter().enumerate() {
            z.row_mut(i).iter_mut().for_each(|c| *c /= wt);
        }
        z
    }

    /// `diag(weight)^-1 P`, the effective averaging matrix behind the ratios.
    pub fn distribution(&self) -> Matrix {
        let mut w = self.product.clone();
        for (i, &wt) in self.weight.iter().enumerate() {
            w.row_mut(i).iter_mut().for_each(|c| *c /= wt);
        }
        w
    }
}

/// Output of a consensus run.
#[derive(Debug, Clone)]
pub struct ConsensusRun {
    /// Final node values, one row per node.
    pub values: Matrix,
    /// Final distribution (or effective averaging) matrix.
    pub distribution: Matrix,
    /// Records for rounds `0..=rounds_completed`.
    pub trace: Vec<ConsensusRecord>,
    /// Matrices realised each round, in order.
    pub mixing: Vec<MixingMatrix>,
    pub status: Status,
    /// Nodes whose push-sum weight underflowed.
    pub collapsed_nodes: Vec<usize>,
}

fn record(
    round: usize,
    z: &Matrix,
    w: &Matrix,
    x: &Matrix,
    weight_sum: Option<f64>,
    status: Status,
) -> ConsensusRecord {
    ConsensusRecord {
        round,
        w_error: w_error(w),
        w_max_deviation: max_deviation(w),
        consensus_error: consensus_error(z, x).ok(),
        spread: spread(z),
        weight_sum,
        status,
    }
}

fn check_rows(x: &Matrix, n: usize) -> Result<()> {
    if x.rows() != n {
        return Err(SimError::invalid(format!(
            "input has {} rows, network has {n} nodes",
            x.rows()
        )));
    }
    if x.rows() == 0 {
        return Err(SimError::invalid("input must have at least one node"));
    }
    Ok(())
}

fn finite_status(z: &Matrix) -> Status {
    if z.is_finite() {
        Status::Ok
    } else {
        Status::Diverged
    }
}

/// PULM driven by `net` for `rounds` rounds. Mixing matrices come from the effective graphs.
pub fn pulm_run(x: &Matrix, net: &Network, rounds: usize) -> Result<ConsensusRun> {
    check_rows(x, net.node_count())?;
    let mut sim = Pulm::new(x);
    let mut mixing = Vec::with_capacity(rounds);
    pulm_drive(x, &mut sim, rounds, |sim, k| {
        let graphs = net.round(k as u64);
        mixing.push(sim.step_graph(&graphs.effective)?);
        Ok(())
    })
    .map(|mut run| {
        run.mixing = mixing;
        run
    })
}

/// PULM on a given sequence of row-stochastic matrices.
pub fn pulm_run_matrices(x: &Matrix, seq: &[MixingMatrix]) -> Result<ConsensusRun> {
    if let Some(a) = seq.first() {
        check_rows(x, a.size())?;
    }
    let mut sim = Pulm::new(x);
    pulm_drive(x, &mut sim, seq.len(), |sim, k| sim.step_matrix(&seq[k])).map(|mut run| {
        run.mixing = seq.to_vec();
        run
    })
}

fn pulm_drive(
    x: &Matrix,
    sim: &mut Pulm,
    rounds: usize,
    mut step: impl FnMut(&mut Pulm, usize) -> Result<()>,
) -> Result<ConsensusRun> {
    let snapshot =
        |sim: &Pulm, status| record(sim.round(), &sim.values(), sim.distribution().matrix(), x, None, status);
    let mut trace = vec![snapshot(sim, Status::Ok)];
    let mut status = Status::Ok;
    for k in 0..rounds {
        step(sim, k)?;
        status = finite_status(&sim.values());
        trace.push(snapshot(sim, status));
        if !status.is_ok() {
            break;
        }
    }
    Ok(ConsensusRun {
        values: sim.values(),
        distribution: sim.distribution().into_matrix(),
        trace,
        mixing: Vec::new(),
        status,
        collapsed_nodes: Vec::new(),
    })
}

/// Plain pull gossip on the effective graphs. `distribution` is the accumulated product.
pub fn plain_gossip_run(x: &Matrix, net: &Network, rounds: usize) -> Result<ConsensusRun> {
    check_rows(x, net.node_count())?;
    let seq: Vec<MixingMatrix> = (0..rounds)
        .map(|k| row_stochastic_from_graph(&net.round(k as u64).effective))
        .collect();
    plain_gossip_run_matrices(x, &seq)
}

/// Plain pull gossip on a given sequence of row-stochastic matrices.
pub fn plain_gossip_run_matrices(x: &Matrix, seq: &[MixingMatrix]) -> Result<ConsensusRun> {
    if let Some(a) = seq.first() {
        check_rows(x, a.size())?;
    }
    let mut sim = PlainGossip::new(x);
    let mut trace = vec![record(0, sim.values(), sim.product(), x, None, Status::Ok)];
    let mut status = Status::Ok;
    let mut used = 0;
    for (k, a) in seq.iter().enumerate() {
        sim.step_matrix(a)?;
        used += 1;
        status = finite_status(sim.values());
        trace.push(record(k + 1, sim.values(), sim.product(), x, None, status));
        if !status.is_ok() {
            break;
        }
    }
    Ok(ConsensusRun {
        values: sim.values().clone(),
        distribution: sim.product().clone(),
        trace,
        mixing: seq[..used].to_vec(),
        status,
        collapsed_nodes: Vec::new(),
    })
}

/// Push-sum on the network. Halts with `NumericalCollapse` once any weight underflows.
pub fn push_sum_run(x: &Matrix, net: &Network, rounds: usize) -> Result<ConsensusRun> {
    check_rows(x, net.node_count())?;
    let mut sim = PushSum::new(x);
    let snapshot = |sim: &PushSum, round, status| {
        record(
            round,
            &sim.values(),
            &sim.distribution(),
            x,
            Some(sim.weight_sum()),
            status,
        )
    };
    let mut trace = vec![snapshot(&sim, 0, Status::Ok)];
    let mut mixing = Vec::with_capacity(rounds);
    let mut status = Status::Ok;
    let mut collapsed = Vec::new();
    for k in 0..rounds {
        let graphs = net.round(k as u64);
        mixing.push(sim.step_graphs(&graphs.intended, &graphs.effective)?);
        collapsed = sim.collapsed_nodes();
        status = if !collapsed.is_empty() {
            Status::NumericalCollapse
        } else {
            finite_status(&sim.values())
        };
        trace.push(snapshot(&sim, k + 1, status));
        if !status.is_ok() {
            break;
        }
    }
    Ok(ConsensusRun {
        values: sim.values(),
        distribution: sim.distribution(),
        trace,
        mixing,
        status,
        collapsed_nodes: collapsed,
    })
}
