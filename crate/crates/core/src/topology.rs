//! Time-varying directed communication graphs and the channel faults acting on them.
//!
//! An edge `(j -> i)` means node `j` transmits to node `i` in that round. Self-loops
//! are always present and are exempt from both edge dropout and packet loss.
//!
//! Two graphs exist per round: the *intended* graph (what senders attempt, which is
//! all a push-style sender can normalize against) and the *effective* graph (what
//! receivers actually got after packet loss).

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Result, SimError};
use crate::rng::SeedStream;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DirectedGraph {
    n: usize,
    // inbound[to * n + from]
    inbound: Vec<bool>,
}

impl DirectedGraph {
    /// Self-loops only.
    pub fn new(n: usize) -> Self {
        let mut inbound = vec![false; n * n];
        for i in 0..n {
            inbound[i * n + i] = true;
        }
        Self { n, inbound }
    }

    pub fn complete(n: usize) -> Self {
        Self {
            n,
            inbound: vec![true; n * n],
        }
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn ring(n: usize) -> Self {
        let mut g = Self::new(n);
        if n > 1 {
            for i in 0..n {
                g.inbound[((i + 1) % n) * n + i] = true;
            }
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(from, to) in edges {
            g.add_edge(from, to)?;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        if from >= self.n || to >= self.n {
            return Err(SimError::invalid(format!(
                "edge {from} -> {to} references a node outside 0..{}",
                self.n
            )));
        }
        self.inbound[to * self.n + from] = true;
        Ok(())
    }

    fn drop_edge(&mut self, from: usize, to: usize) {
        if from != to {
            self.inbound[to * self.n + from] = false;
        }
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        from < self.n && to < self.n && self.inbound[to * self.n + from]
    }

    /// Senders heard by `i`, self included, in increasing order.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.inbound[i * self.n..(i + 1) * self.n];
        row.iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j)
    }

    /// Receivers targeted by `j`, self included, in increasing order.
    pub fn out_neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.inbound[i * self.n + j])
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_neighbors(i).count()
    }

    pub fn out_degree(&self, j: usize) -> usize {
        self.out_neighbors(j).count()
    }

    /// All edges `(from, to)`, self-loops included, ordered by receiver then sender.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| self.in_neighbors(i).map(move |j| (j, i)))
            .collect()
    }

    /// Number of non-self-loop edges.
    pub fn edge_count(&self) -> usize {
        self.inbound.iter().filter(|&&e| e).count() - (0..self.n).filter(|&i| self.has_edge(i, i)).count()
    }

    /// Non-self edges over `n(n-1)`; zero for a single node.
    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (self.n * (self.n - 1)) as f64
    }

    pub fn has_all_self_loops(&self) -> bool {
        (0..self.n).all(|i| self.has_edge(i, i))
    }

    pub fn is_subgraph_of(&self, other: &DirectedGraph) -> bool {
        self.n == other.n && self.inbound.iter().zip(&other.inbound).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &DirectedGraph) -> Result<DirectedGraph> {
        if self.n != other.n {
            return Err(SimError::invalid(format!(
                "cannot union graphs on {} and {} nodes",
                self.n, other.n
            )));
        }
        Ok(DirectedGraph {
            n: self.n,
            inbound: self.inbound.iter().zip(&other.inbound).map(|(&a, &b)| a || b).collect(),
        })
    }

    /// Debug dump: one `"from to"` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (from, to) in self.edges() {
            let _ = writeln!(s, "{from} {to}");
        }
        s
    }

    pub fn from_edge_list(n: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(from)), Some(Ok(to)), None) => edges.push((from, to)),
                _ => {
                    return Err(SimError::invalid(format!(
                        "edge list line {}: expected \"from to\", got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Self::from_edges(n, &edges)
    }
}

impl std::fmt::Debug for DirectedGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectedGraph")
            .field("n", &self.n)
            .field(
                "edges",
                &self.edges().into_iter().filter(|(a, b)| a != b).collect::<Vec<_>>(),
            )
            .finish()
    }
}

/// True iff every ordered pair of nodes is joined by a directed path.
pub fn is_strongly_connected(g: &DirectedGraph) -> bool {
    let n = g.node_count();
    if n <= 1 {
        return true;
    }
    // forward reachability from 0, then reachability of 0 from everyone
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for (v, s) in seen.iter_mut().enumerate() {
                let edge = if forward { g.has_edge(u, v) } else { g.has_edge(v, u) };
                if edge && !*s {
                    *s = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// True iff every window of `window` consecutive graphs has a strongly connected union.
pub fn verify_window(seq: &[DirectedGraph], window: usize) -> Result<bool> {
    if window == 0 {
        return Err(SimError::invalid("window length must be positive"));
    }
    if seq.len() < window {
        return Err(SimError::invalid(format!(
            "sequence of length {} is shorter than the window {window}",
            seq.len()
        )));
    }
    for start in 0..=seq.len() - window {
        let mut acc = seq[start].clone();
        for g in &seq[start + 1..start + window] {
            acc = acc.union(g)?;
        }
        if !is_strongly_connected(&acc) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A latent graph together with what the generator could achieve.
#[derive(Debug, Clone)]
pub struct LatentGraph {
    pub graph: DirectedGraph,
    pub density: f64,
    pub warning: Option<String>,
}

/// Directed ring backbone plus random extra edges until the non-self edge density
/// reaches `sparsity` (rounded to the nearest edge count).
///
/// Asking for less than the ring's own density returns the ring with a warning.
pub fn gen_latent_strongly_connected(n: usize, sparsity: f64, seed: u64) -> Result<LatentGraph> {
    if n == 0 {
        return Err(SimError::invalid("latent graph needs at least one node"));
    }
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(SimError::invalid(format!("sparsity {sparsity} outside [0, 1]")));
    }
    let mut graph = DirectedGraph::ring(n);
    if n == 1 {
        return Ok(LatentGraph {
            graph,
            density: 0.0,
            warning: None,
        });
    }
    let pairs = n * (n - 1);
    let target = (sparsity * pairs as f64).round() as usize;
    let ring_edges = n;
    let mut warning = None;
    if target < ring_edges {
        warning = Some(format!(
            "requested sparsity {sparsity} is below the ring density {:.6}; using the ring",
            ring_edges as f64 / pairs as f64
        ));
    } else {
        let mut candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|from| (0..n).map(move |to| (from, to)))
            .filter(|&(from, to)| from != to && !graph.has_edge(from, to))
            .collect();
        candidates.shuffle(&mut SeedStream::new(seed).derive("latent-graph").rng());
        for &(from, to) in candidates.iter().take(target - ring_edges) {
            graph.add_edge(from, to)?;
        }
    }
    let density = graph.density();
    Ok(LatentGraph {
        graph,
        density,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologyKind {
    /// Every ordered pair `(j -> i)` is present independently with probability `p_c`.
    RandomBroadcast {
        p_c: f64,
    },
    /// Each latent edge disappears independently with probability `p_d`.
    LatentDropout {
        latent: DirectedGraph,
        p_d: f64,
    },
    Static(DirectedGraph),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyModel {
    n: usize,
    kind: TopologyKind,
    stream: SeedStream,
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SimError::invalid(format!("{name} = {p} outside [0, 1]")));
    }
    Ok(())
}

impl TopologyModel {
    pub fn random_broadcast(n: usize, p_c: f64, seed: u64) -> Result<Self> {
        Self::new(n, TopologyKind::RandomBroadcast { p_c }, seed)
    }

    pub fn latent_dropout(latent: DirectedGraph, p_d: f64, seed: u64) -> Result<Self> {
        Self::new(latent.node_count(), TopologyKind::LatentDropout { latent, p_d }, seed)
    }

    pub fn fixed(graph: DirectedGraph) -> Self {
        Self {
            n: graph.node_count(),
            kind: TopologyKind::Static(graph),
            stream: SeedStream::new(0).derive("topology"),
        }
    }

    pub fn new(n: usize, kind: TopologyKind, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(SimError::invalid("topology needs at least one node"));
        }
        match &kind {
            TopologyKind::RandomBroadcast { p_c } => check_probability("p_c", *p_c)?,
            TopologyKind::LatentDropout { latent, p_d } => {
                check_probability("p_d", *p_d)?;
                if latent.node_count() != n {
                    return Err(SimError::invalid("latent graph size does not match n"));
                }
                if !is_strongly_connected(latent) {
                    return Err(SimError::invalid("latent graph is not strongly connected"));
                }
            }
            TopologyKind::Static(g) => {
                if g.node_count() != n {
                    return Err(SimError::invalid("static graph size does not match n"));
                }
            }
        }
        Ok(Self {
            n,
            kind,
            stream: SeedStream::new(seed).derive("topology"),
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &TopologyKind {
        &self.kind
    }

    /// The intended graph of round `k`; a pure function of `(seed, k)`.
    pub fn realize_round(&self, k: u64) -> DirectedGraph {
        let n = self.n;
        match &self.kind {
            TopologyKind::Static(g) => g.clone(),
            TopologyKind::RandomBroadcast { p_c } => {
                let mut g = DirectedGraph::new(n);
                for to in 0..n {
                    for from in 0..n {
                        if from != to && self.stream.bernoulli(*p_c, k, from as u64, to as u64) {
                            g.inbound[to * n + from] = true;
                        }
                    }
                }
                g
            }
            TopologyKind::LatentDropout { latent, p_d } => {
                let mut g = latent.clone();
                for (from, to) in latent.edges() {
                    if from != to && self.stream.bernoulli(*p_d, k, from as u64, to as u64) {
                        g.drop_edge(from, to);
                    }
                }
                g
            }
        }
    }
}

/// Post-send message loss, invisible to senders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketLossModel {
    p_t: f64,
    stream: SeedStream,
}

impl PacketLossModel {
    pub fn new(p_t: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&p_t) {
            return Err(SimError::invalid(format!("p_t = {p_t} outside [0, 1)")));
        }
        Ok(Self {
            p_t,
            stream: SeedStream::new(seed).derive("packet-loss"),
        })
    }

    pub fn probability(&self) -> f64 {
        self.p_t
    }
}

/// The graph receivers actually see in round `k`: each non-self edge of `intended`
/// independently removed with probability `p_t`.
pub fn apply_packet_loss(intended: &DirectedGraph, loss: &PacketLossModel, k: u64) -> DirectedGraph {
    let mut g = intended.clone();
    if loss.p_t == 0.0 {
        return g;
    }
    for (from, to) in intended.edges() {
        if from != to && loss.stream.bernoulli(loss.p_t, k, from as u64, to as u64) {
            g.drop_edge(from, to);
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundGraphs {
    pub intended: DirectedGraph,
    pub effective: DirectedGraph,
}

/// A topology model plus an optional loss model.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub topology: TopologyModel,
    pub loss: Option<PacketLossModel>,
}

impl Network {
    pub fn new(topology: TopologyModel) -> Self {
        Self { topology, loss: None }
    }

    pub fn with_loss(mut self, loss: PacketLossModel) -> Self {
        self.loss = Some(loss);
        self
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn round(&self, k: u64) -> RoundGraphs {
        let intended = self.topology.realize_round(k);
        let effective = match &self.loss {
            Some(loss) => apply_packet_loss(&intended, loss, k),
            None => intended.clone(),
        };
        RoundGraphs { intended, effective }
    }
}
