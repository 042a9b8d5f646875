//! Mixing matrices built from round graphs, and diagnostics over matrix sequences.
//!
//! Row-stochastic matrices are what receivers can build on their own (uniform weight
//! over everything that arrived). Column-stochastic matrices need the sender's
//! out-degree and are built from the *intended* graph; messages lost in transit
//! leave holes in the columns.

use crate::error::{Result, SimError};
use crate::linalg::Matrix;
use crate::topology::DirectedGraph;

const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stochasticity {
    Row,
    Column,
    None,
}

/// Dense nonnegative `n x n` matrix; entry `(i, j)` is the weight node `i` puts on
/// what it received from node `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    entries: Matrix,
    stochasticity: Stochasticity,
}

impl MixingMatrix {
    /// Wraps `entries`, checking nonnegativity and the claimed tag.
    pub fn new(entries: Matrix, stochasticity: Stochasticity) -> Result<Self> {
        if !entries.is_square() {
            return Err(SimError::invalid("mixing matrix must be square"));
        }
        if entries.as_slice().iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(SimError::invalid(
                "mixing matrix entries must be finite and nonnegative",
            ));
        }
        let sums = match stochasticity {
            Stochasticity::Row => entries.row_sums(),
            Stochasticity::Column => entries.column_sums(),
            Stochasticity::None => Vec::new(),
        };
        if let Some((idx, s)) = sums.iter().enumerate().find(|(_, s)| (*s - 1.0).abs() > STOCHASTIC_TOL) {
            return Err(SimError::invalid(format!(
                "{stochasticity:?}-stochastic tag but line {idx} sums to {s}"
            )));
        }
        Ok(Self { entries, stochasticity })
    }

    /// Convenience for hand-written row-stochastic matrices.
    pub fn row_stochastic<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, Stochasticity::Row)
    }

    /// `E_n`, the exact averaging matrix.
    pub fn averaging(n: usize) -> Self {
        Self {
            entries: Matrix::averaging(n),
            stochasticity: Stochasticity::Row,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: Matrix::identity(n),
            stochasticity: Stochasticity::Row,
        }
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn stochasticity(&self) -> Stochasticity {
        self.stochasticity
    }

    pub fn size(&self) -> usize {
        self.entries.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.entries.row(i)
    }

    /// `entry (i, j) > 0` exactly when `(j -> i)` is an edge of `g`.
    pub fn is_compatible_with(&self, g: &DirectedGraph) -> bool {
        let n = self.size();
        g.node_count() == n && (0..n).all(|i| (0..n).all(|j| (self.get(i, j) > 0.0) == g.has_edge(j, i)))
    }

    /// Smallest strictly positive entry.
    pub fn min_positive_entry(&self) -> f64 {
        self.entries
            .as_slice()
            .iter()
            .copied()
            .filter(|&a| a > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `a_ij = 1 / |N_in(i)|` for every in-neighbour `j` of `i`, self included.
pub fn row_stochastic_from_graph(g: &DirectedGraph) -> MixingMatrix {
    let n = g.node_count();
    let mut entries = Matrix::zeros(n, n);
    for i in 0..n {
        let senders: Vec<usize> = g.in_neighbors(i).collect();
        let w = 1.0 / senders.len() as f64;
        for j in senders {
            entries[(i, j)] = w;
        }
    }
    MixingMatrix {
        entries,
        stochasticity: Stochasticity::Row,
    }
}

/// Push weights: sender `j` splits its mass as `1 / d_out(j)` over its *intended*
/// out-edges; shares on edges missing from `effective` are lost.
///
/// Tagged `Column` only when nothing was lost.
pub fn column_stochastic_from_intended(intended: &DirectedGraph, effective: &DirectedGraph) -> Result<MixingMatrix> {
    if !effective.is_subgraph_of(intended) {
        return Err(SimError::invalid(
            "effective graph must be a subgraph of the intended graph",
        ));
    }
    let n = intended.node_count();
    let mut entries = Matrix::zeros(n, n);
    for j in 0..n {
        let share = 1.0 / intended.out_degree(j) as f64;
        for i in effective.out_neighbors(j) {
            entries[(i, j)] = share;
        }
    }
    let stochasticity = if effective == intended {
        Stochasticity::Column
    } else {
        Stochasticity::None
    };
    Ok(MixingMatrix { entries, stochasticity })
}

fn require_row_tag(seq: &[MixingMatrix]) -> Result<()> {
    if let Some(idx) = seq.iter().position(|a| a.stochasticity != Stochasticity::Row) {
        return Err(SimError::invalid(format!("matrix {idx} is not row-stochastic")));
    }
    Ok(())
}

/// `A^(k+len-1) ... A^(k+1) A^(k)`.
pub fn product_window(seq: &[MixingMatrix], start: usize, len: usize) -> Result<MixingMatrix> {
    if len == 0 {
        return Err(SimError::invalid("window length must be positive"));
    }
    let end = start.checked_add(len).filter(|&e| e <= seq.len()).ok_or_else(|| {
        SimError::invalid(format!(
            "window [{start}, {start}+{len}) exceeds sequence length {}",
            seq.len()
        ))
    })?;
    let window = &seq[start..end];
    require_row_tag(window)?;
    let mut acc = window[0].entries.clone();
    for a in &window[1..] {
        acc = a.entries.matmul(&acc)?;
    }
    Ok(MixingMatrix {
        entries: acc,
        stochasticity: Stochasticity::Row,
    })
}

/// Empirical `(B, eta)` constants over a realized matrix prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingCertificate {
    /// Smallest window length whose products are all entrywise positive.
    pub window: usize,
    /// Minimum entry over every checked window product.
    pub eta: f64,
    /// Number of window start indices that were checked.
    pub windows_checked: usize,
}

/// Finds the smallest `B <= n * window_hint` such that every length-`B` window
/// product available in `seq` is entrywise positive.
///
/// Positivity of a window is monotone in its length because every matrix has a
/// positive diagonal, so `B` is the worst first-positive length over all starts.
pub fn certify_eta_b(seq: &[MixingMatrix], window_hint: usize) -> Result<MixingCertificate> {
    let n = seq
        .first()
        .map(MixingMatrix::size)
        .ok_or_else(|| SimError::invalid("empty matrix sequence"))?;
    if window_hint == 0 {
        return Err(SimError::invalid("window hint must be positive"));
    }
    let budget = n * window_hint;
    if seq.len() < budget {
        return Err(SimError::invalid(format!(
            "need at least n * hint = {budget} matrices, got {}",
            seq.len()
        )));
    }
    require_row_tag(seq)?;
    if seq.iter().any(|a| a.size() != n) {
        return Err(SimError::invalid("matrix sizes differ within the sequence"));
    }

    let fail = || SimError::CertificationFailed { budget, len: seq.len() };
    // first_positive[k]: shortest length L <= budget with Phi(k+L, k) > 0, if reached in-sequence
    let mut first_positive: Vec<Option<usize>> = Vec::with_capacity(seq.len());
    for start in 0..seq.len() {
        let max_len = budget.min(seq.len() - start);
        let mut acc = seq[start].entries.clone();
        let mut found = None;
        for len in 1..=max_len {
            if len > 1 {
                acc = seq[start + len - 1].entries.matmul(&acc)?;
            }
            if acc.min_entry() > 0.0 {
                found = Some(len);
                break;
            }
        }
        if found.is_none() && max_len == budget {
            return Err(fail());
        }
        first_positive.push(found);
    }

    let window = (1..=budget)
        .find(|&b| {
            first_positive[..=seq.len() - b]
                .iter()
                .all(|f| f.is_some_and(|l| l <= b))
        })
        .ok_or_else(fail)?;
    let windows_checked = seq.len() - window + 1;
    let mut eta = f64::INFINITY;
    for start in 0..windows_checked {
        eta = eta.min(product_window(seq, start, window)?.entries.min_entry());
    }
    Ok(MixingCertificate {
        window,
        eta,
        windows_checked,
    })
}

/// Stationary distribution of a primitive row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronVector {
    pi: Vec<f64>,
    residual: f64,
}

impl PerronVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.pi
    }

    /// `||pi^T A - pi^T||_inf` at termination.
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

const PERRON_TOL: f64 = 1e-12;
const PERRON_MAX_ITERS: usize = 100_000;

/// Left eigenvector for eigenvalue 1 by power iteration on `A^T`, normalized to sum 1.
pub fn perron_vector(a: &MixingMatrix) -> Result<PerronVector> {
    if a.stochasticity != Stochasticity::Row {
        return Err(SimError::invalid("Perron vector requires a row-stochastic matrix"));
    }
    let n = a.size();
    if !is_primitive(a) {
        return Err(SimError::NotPrimitive {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    let at = a.entries.transpose();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..PERRON_MAX_ITERS {
        let mut next = at.mul_vec(&pi)?;
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|p| *p /= total);
        let step = next.iter().zip(&pi).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        pi = next;
        if step <= PERRON_TOL {
            break;
        }
    }
    // residual of the returned vector itself
    let image = at.mul_vec(&pi)?;
    let residual = image.iter().zip(&pi).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    if residual > PERRON_TOL || pi.iter().any(|&p| !(p > 0.0)) {
        return Err(SimError::NotPrimitive {
            iterations: PERRON_MAX_ITERS,
            residual,
        });
    }
    Ok(PerronVector { pi, residual })
}

/// Structural primitivity: some power of the support pattern is all-ones.
/// Squares the boolean pattern until the exponent passes Wielandt's bound `(n-1)^2 + 1`.
pub fn is_primitive(a: &MixingMatrix) -> bool {
    let n = a.size();
    let mut pattern: Vec<bool> = a.entries.as_slice().iter().map(|&x| x > 0.0).collect();
    let bound = (n - 1) * (n - 1) + 1;
    let mut power = 1usize;
    while power < bound {
        let mut next = vec![false; n * n];
        for i in 0..n {
            for k in 0..n {
                if pattern[i * n + k] {
                    for j in 0..n {
                        next[i * n + j] |= pattern[k * n + j];
                    }
                }
            }
        }
        pattern = next;
        power *= 2;
    }
    pattern.into_iter().all(|p| p)
}

/// Column spread of the running product: `gap_t = max_j (max_i P_t[i,j] - min_i P_t[i,j])`
/// with `P_0 = I` and `P_t = A^(t-1) P_(t-1)`. Returns `seq.len() + 1` values.
pub fn rank_one_gap(seq: &[MixingMatrix]) -> Result<Vec<f64>> {
    require_row_tag(seq)?;
    let Some(first) = seq.first() else {
        return Ok(vec![]);
    };
    let n = first.size();
    let spread = |p: &Matrix| {
        (0..n)
            .map(|j| {
                let col = p.column(j);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .fold(0.0, f64::max)
    };
    let mut p = Matrix::identity(n);
    let mut gaps = Vec::with_capacity(seq.len() + 1);
    gaps.push(if n > 1 { spread(&p) } else { 0.0 });
    for a in seq {
        p = a.entries.matmul(&p)?;
        gaps.push(spread(&p));
    }
    Ok(gaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::TopologyModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn a1() -> MixingMatrix {
        MixingMatrix::row_stochastic(&[[0.9, 0.1], [0.5, 0.5]]).unwrap()
    }

    #[test]
    fn single_node_matrix() {
        let a = row_stochastic_from_graph(&DirectedGraph::new(1));
        assert_eq!(a.entries().as_slice(), &[1.0]);
    }

    #[test]
    fn complete_graph_uniform() {
        let a = row_stochastic_from_graph(&DirectedGraph::complete(4));
        assert!(a.entries().as_slice().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn two_in_neighbors_split_evenly() {
        let g = DirectedGraph::from_edges(3, &[(2, 0)]).unwrap();
        let a = row_stochastic_from_graph(&g);
        assert_eq!(a.row(0), &[0.5, 0.0, 0.5]);
        assert_eq!(a.row(1), &[0.0, 1.0, 0.0]);
        assert!(a.is_compatible_with(&g));
    }

    #[test]
    fn column_from_intended_without_loss() {
        let g = DirectedGraph::complete(4);
        let b = column_stochastic_from_intended(&g, &g).unwrap();
        assert_eq!(b.stochasticity(), Stochasticity::Column);
        assert!(b.entries().as_slice().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn column_from_intended_with_lost_edge() {
        // node 0 intends to reach {0, 1, 2}; the message to 2 is lost
        let intended = DirectedGraph::from_edges(3, &[(0, 1), (0, 2)]).unwrap();
        let effective = DirectedGraph::from_edges(3, &[(0, 1)]).unwrap();
        let b = column_stochastic_from_intended(&intended, &effective).unwrap();
        assert_eq!(b.stochasticity(), Stochasticity::None);
        assert_abs_diff_eq!(b.entries().column_sums()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert!(column_stochastic_from_intended(&effective, &intended).is_err());
    }

    #[test]
    fn column_loopback_sums_to_one() {
        let g = TopologyModel::random_broadcast(9, 0.3, 4).unwrap().realize_round(2);
        let b = column_stochastic_from_intended(&g, &g).unwrap();
        for s in b.entries().column_sums() {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn window_products() {
        let seq = vec![a1(), MixingMatrix::averaging(2)];
        assert_eq!(product_window(&seq, 0, 1).unwrap(), a1());
        let e = vec![MixingMatrix::averaging(3); 2];
        let p = product_window(&e, 0, 2).unwrap();
        assert!(p.entries().frobenius_distance(&Matrix::averaging(3)).unwrap() < 1e-15);
        assert!(product_window(&seq, 1, 2).is_err());
        assert!(product_window(&seq, 0, 0).is_err());
    }

    #[test]
    fn ring_squared_min_entry() {
        // oracle: A = (I + P)/2 for the 3-cycle P, A^2 = (I + 2P + P^2)/4
        let a = row_stochastic_from_graph(&DirectedGraph::ring(3));
        let p = product_window(&[a.clone(), a], 0, 2).unwrap();
        assert!(p.entries().min_entry() > 0.0);
        assert_abs_diff_eq!(p.entries().min_entry(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn certify_complete_and_ring() {
        let complete = vec![row_stochastic_from_graph(&DirectedGraph::complete(5)); 5];
        let c = certify_eta_b(&complete, 1).unwrap();
        assert_eq!(c.window, 1);
        assert_abs_diff_eq!(c.eta, 0.2, epsilon = 1e-15);
        assert_eq!(c.windows_checked, 5);

        let ring = vec![row_stochastic_from_graph(&DirectedGraph::ring(3)); 6];
        let c = certify_eta_b(&ring, 2).unwrap();
        assert_eq!(c.window, 2);
        assert_abs_diff_eq!(c.eta, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn certify_fails_on_isolated_nodes() {
        let lonely = vec![row_stochastic_from_graph(&DirectedGraph::new(3)); 9];
        assert!(matches!(
            certify_eta_b(&lonely, 3),
            Err(SimError::CertificationFailed { .. })
        ));
        assert!(matches!(certify_eta_b(&lonely, 4), Err(SimError::InvalidArgument(_))));
    }

    #[test]
    fn perron_example_matrices() {
        let pi = perron_vector(&a1()).unwrap();
        assert_abs_diff_eq!(pi.as_slice()[0], 5.0 / 6.0, epsilon = 1e-10);
        assert_abs_diff_eq!(pi.as_slice()[1], 1.0 / 6.0, epsilon = 1e-10);
        let a2 = MixingMatrix::row_stochastic(&[[0.5, 0.5], [0.1, 0.9]]).unwrap();
        let pi = perron_vector(&a2).unwrap();
        assert_abs_diff_eq!(pi.as_slice()[0], 1.0 / 6.0, epsilon = 1e-10);
        assert_abs_diff_eq!(pi.as_slice()[1], 5.0 / 6.0, epsilon = 1e-10);
        let pi = perron_vector(&MixingMatrix::averaging(7)).unwrap();
        assert!(pi.as_slice().iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn perron_rejects_periodic_and_reducible() {
        // bipartite, period 2: the iterate oscillates between two vectors
        let periodic = MixingMatrix::row_stochastic(&[[0.0, 0.5, 0.5], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(perron_vector(&periodic), Err(SimError::NotPrimitive { .. })));
        // absorbing state: limit has a zero entry
        let absorbing = MixingMatrix::row_stochastic(&[[1.0, 0.0], [0.5, 0.5]]).unwrap();
        assert!(matches!(perron_vector(&absorbing), Err(SimError::NotPrimitive { .. })));
        assert!(perron_vector(&MixingMatrix::new(Matrix::identity(2), Stochasticity::None).unwrap()).is_err());
    }

    #[test]
    fn rank_one_gap_examples() {
        let g = rank_one_gap(&[MixingMatrix::averaging(4)]).unwrap();
        assert_eq!(g[0], 1.0);
        assert!(g[1].abs() < 1e-15);

        // A1 = 1 pi^T + 0.4 * (rank-one remainder), so gap_t = gap_1 * 0.4^(t-1)
        let gaps = rank_one_gap(&vec![a1(); 20]).unwrap();
        for t in 2..=20 {
            assert_abs_diff_eq!(gaps[t] / gaps[t - 1], 0.4, epsilon = 1e-6);
        }
    }

    proptest! {
        #[test]
        fn window_products_associate(seed: u64, n in 2usize..7, b1 in 1usize..4, b2 in 1usize..4) {
            let model = TopologyModel::random_broadcast(n, 0.4, seed).unwrap();
            let seq: Vec<_> = (0..(b1 + b2) as u64).map(|k| row_stochastic_from_graph(&model.realize_round(k))).collect();
            let whole = product_window(&seq, 0, b1 + b2).unwrap();
            let first = product_window(&seq, 0, b1).unwrap();
            let second = product_window(&seq, b1, b2).unwrap();
            let split = second.entries().matmul(first.entries()).unwrap();
            prop_assert!(whole.entries().frobenius_distance(&split).unwrap() <= 1e-12);
        }

        #[test]
        fn row_construction_compatible_with_floor(seed: u64, n in 1usize..15, p in 0.0f64..=1.0) {
            let g = TopologyModel::random_broadcast(n, p, seed).unwrap().realize_round(0);
            let a = row_stochastic_from_graph(&g);
            prop_assert!(a.is_compatible_with(&g));
            prop_assert!(a.min_positive_entry() >= 1.0 / n as f64);
            prop_assert!(MixingMatrix::new(a.entries().clone(), Stochasticity::Row).is_ok());
        }
    }
}
