//! Local objectives `f_i` and synthetic data.
//!
//! Parameters are flat vectors. For logistic regression the layout is `(w_0, ..., w_{d-1}, b)`.

use std::io;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Result, SimError};
use crate::linalg::{dot, Matrix};
use crate::rng::SeedStream;

/// A sum-structured objective `f = (1/n) sum_i f_i`.
pub trait Objective: Sync {
    fn nodes(&self) -> usize;
    fn dim(&self) -> usize;
    fn local_value(&self, i: usize, x: &[f64]) -> f64;
    fn local_grad(&self, i: usize, x: &[f64]) -> Vec<f64>;

    /// Upper bound on the Lipschitz constant of every `grad f_i`.
    fn smoothness(&self) -> f64;

    /// Lower bound on `inf f_i`, shared by all nodes.
    fn lower_bound(&self) -> f64;

    fn value(&self, x: &[f64]) -> f64 {
        (0..self.nodes()).map(|i| self.local_value(i, x)).sum::<f64>() / self.nodes() as f64
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.nodes() {
            for (acc, v) in g.iter_mut().zip(self.local_grad(i, x)) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.nodes() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }
}

/// `f_i(x) = 0.5 ||x - c_i||^2`. The global minimizer is the mean target.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    targets: Matrix,
}

impl QuadraticObjective {
    /// One row of `targets` per node.
    pub fn new(targets: Matrix) -> Result<Self> {
        if targets.rows() == 0 || targets.cols() == 0 {
            return Err(SimError::invalid(
                "quadratic objective needs at least one node and one dimension",
            ));
        }
        Ok(Self { targets })
    }

    /// Targets drawn i.i.d. standard normal.
    pub fn random(n: usize, d: usize, seed: u64) -> Result<Self> {
        let mut rng = SeedStream::new(seed).derive("quadratic").rng();
        Self::new(Matrix::from_fn(n, d, |_, _| rng.sample(StandardNormal)))
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn minimizer(&self) -> Vec<f64> {
        self.targets.column_means()
    }
}

pub fn quadratic_value_grad(obj: &QuadraticObjective, i: usize, x: &[f64]) -> (f64, Vec<f64>) {
    let g: Vec<f64> = x.iter().zip(obj.targets.row(i)).map(|(a, c)| a - c).collect();
    (0.5 * dot(&g, &g), g)
}

impl Objective for QuadraticObjective {
    fn nodes(&self) -> usize {
        self.targets.rows()
    }

    fn dim(&self) -> usize {
        self.targets.cols()
    }

    fn local_value(&self, i: usize, x: &[f64]) -> f64 {
        quadratic_value_grad(self, i, x).0
    }

    fn local_grad(&self, i: usize, x: &[f64]) -> Vec<f64> {
        quadratic_value_grad(self, i, x).1
    }

    fn smoothness(&self) -> f64 {
        1.0
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }
}

/// One node's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    /// `S_i x d`, one sample per row.
    pub features: Matrix,
    /// `+1` or `-1`.
    pub labels: Vec<f64>,
}

/// How a synthetic dataset was drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMeta {
    pub sigma_h: f64,
    pub seed: u64,
    pub w_star: Vec<f64>,
    pub b_star: f64,
    /// The first `remainder` shards hold one extra sample.
    pub remainder: usize,
}

/// Logistic regression with the non-convex penalty `lambda * sum t^2 / (1 + t^2)`
/// over every weight and the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticDataset {
    shards: Vec<Shard>,
    features: usize,
    lambda: f64,
    meta: Option<SyntheticMeta>,
}

/// The penalty weight used throughout the regression experiments.
pub const DEFAULT_LAMBDA: f64 = 0.1;

impl LogisticDataset {
    pub fn new(shards: Vec<Shard>, lambda: f64) -> Result<Self> {
        let first = shards
            .first()
            .ok_or_else(|| SimError::invalid("dataset needs at least one shard"))?;
        let d = first.features.cols();
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(SimError::invalid(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        for (i, s) in shards.iter().enumerate() {
            if s.features.rows() == 0 {
                return Err(SimError::invalid(format!("shard {i} is empty")));
            }
            if s.features.cols() != d || s.labels.len() != s.features.rows() {
                return Err(SimError::invalid(format!("shard {i} has inconsistent shape")));
            }
            if s.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
                return Err(SimError::invalid(format!("shard {i} has a label outside {{-1, +1}}")));
            }
        }
        Ok(Self {
            shards,
            features: d,
            lambda,
            meta: None,
        })
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    /// Number of features `d`; the parameter vector has length `d + 1`.
    pub fn features(&self) -> usize {
        self.features
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn meta(&self) -> Option<&SyntheticMeta> {
        self.meta.as_ref()
    }

    /// CSV with header `node,label,f_0,...,f_{d-1}`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["node".to_string(), "label".to_string()];
        header.extend((0..self.features).map(|j| format!("f_{j}")));
        w.write_record(&header).map_err(csv_err)?;
        for (i, s) in self.shards.iter().enumerate() {
            for (row, &y) in s.features.row_iter().zip(&s.labels) {
                let mut rec = vec![i.to_string(), format!("{}", y as i64)];
                rec.extend(row.iter().map(|v| format!("{v:.16e}")));
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        w.flush()
            .map_err(|e| SimError::invalid(format!("csv write failed: {e}")))?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv). Nodes must be numbered `0..n` without gaps.
    pub fn read_csv<R: io::Read>(reader: R, lambda: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let d = r
            .headers()
            .map_err(csv_err)?
            .len()
            .checked_sub(2)
            .ok_or_else(|| SimError::invalid("csv header too short"))?;
        let mut rows: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let field = |k: usize| rec.get(k).ok_or_else(|| SimError::invalid("short csv record"));
            let node: usize = field(0)?
                .parse()
                .map_err(|_| SimError::invalid("bad node index in csv"))?;
            let label: f64 = field(1)?.parse().map_err(|_| SimError::invalid("bad label in csv"))?;
            let x = (0..d)
                .map(|j| {
                    field(j + 2)?
                        .parse::<f64>()
                        .map_err(|_| SimError::invalid("bad feature in csv"))
                })
                .collect::<Result<Vec<_>>>()?;
            if node > rows.len() {
                return Err(SimError::invalid(format!("csv skips node {}", rows.len())));
            }
            if node == rows.len() {
                rows.push((Vec::new(), Vec::new()));
            }
            rows[node].0.extend(x);
            rows[node].1.push(label);
        }
        let shards = rows
            .into_iter()
            .map(|(flat, labels)| {
                let s = labels.len();
                Shard {
                    features: Matrix::from_fn(s, d, |a, b| flat[a * d + b]),
                    labels,
                }
            })
            .collect();
        Self::new(shards, lambda)
    }
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::invalid(format!("csv: {e}"))
}

/// `log(1 + e^t)`, returning `t` itself past 30 where the correction is below 1e-13.
pub fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn penalty(lambda: f64, w: &[f64], b: f64) -> f64 {
    let term = |t: f64| t * t / (1.0 + t * t);
    lambda * (term(b) + w.iter().map(|&t| term(t)).sum::<f64>())
}

fn penalty_grad(lambda: f64, t: f64) -> f64 {
    let s = 1.0 + t * t;
    lambda * 2.0 * t / (s * s)
}

pub fn logistic_value(i: usize, w: &[f64], b: f64, data: &LogisticDataset) -> f64 {
    let s = &data.shards[i];
    let loss: f64 = s
        .features
        .row_iter()
        .zip(&s.labels)
        .map(|(x, &y)| softplus(-y * (dot(x, w) + b)))
        .sum::<f64>();
    loss / s.labels.len() as f64 + penalty(data.lambda, w, b)
}

pub fn logistic_grad(i: usize, w: &[f64], b: f64, data: &LogisticDataset) -> (Vec<f64>, f64) {
    let s = &data.shards[i];
    let inv = 1.0 / s.labels.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (x, &y) in s.features.row_iter().zip(&s.labels) {
        let c = -y * sigmoid(-y * (dot(x, w) + b)) * inv;
        for (g, xj) in gw.iter_mut().zip(x) {
            *g += c * xj;
        }
        gb += c;
    }
    for (g, &t) in gw.iter_mut().zip(w) {
        *g += penalty_grad(data.lambda, t);
    }
    (gw, gb + penalty_grad(data.lambda, b))
}

impl Objective for LogisticDataset {
    fn nodes(&self) -> usize {
        self.shards.len()
    }

    fn dim(&self) -> usize {
        self.features + 1
    }

    fn local_value(&self, i: usize, x: &[f64]) -> f64 {
        logistic_value(i, &x[..self.features], x[self.features], self)
    }

    fn local_grad(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let (mut g, gb) = logistic_grad(i, &x[..self.features], x[self.features], self);
        g.push(gb);
        g
    }

    /// `max_i (1/4) ||X~_i||_2^2 / S_i + 2 lambda`, with `X~_i` the features plus a ones column.
    /// The spectral norm is a power-iteration estimate inflated by a relative 1e-9.
    fn smoothness(&self) -> f64 {
        let worst = self
            .shards
            .iter()
            .map(|s| {
                let aug = Matrix::from_fn(s.features.rows(), self.features + 1, |r, c| {
                    if c < self.features {
                        s.features[(r, c)]
                    } else {
                        1.0
                    }
                });
                largest_eigenvalue_psd(&aug.transpose().matmul(&aug).expect("square gram")) / s.labels.len() as f64
            })
            .fold(0.0, f64::max);
        0.25 * worst * (1.0 + 1e-9) + 2.0 * self.lambda
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn largest_eigenvalue_psd(m: &Matrix) -> f64 {
    let n = m.rows();
    // A non-uniform start avoids being orthogonal to the top eigenvector by symmetry.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / n as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let mv = m.mul_vec(&v).expect("square");
        let norm = dot(&mv, &mv).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = dot(&v, &mv) / dot(&v, &v);
        v = mv.into_iter().map(|c| c / norm).collect();
        if (next - lambda).abs() <= 1e-14 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Parameters of the synthetic logistic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLogistic {
    pub nodes: usize,
    /// Total samples across all nodes.
    pub samples: usize,
    pub features: usize,
    pub sigma_h: f64,
    pub lambda: f64,
    /// Pin the global bias instead of drawing it.
    pub fixed_bias: Option<f64>,
}

impl SyntheticLogistic {
    pub fn new(nodes: usize, samples: usize, features: usize, sigma_h: f64) -> Self {
        Self {
            nodes,
            samples,
            features,
            sigma_h,
            lambda: DEFAULT_LAMBDA,
            fixed_bias: None,
        }
    }

    /// Global latent model from `N(0, I)`, node models from `N(global, sigma_h^2 I)`,
    /// standard normal features, `y = +1` with probability `sigmoid(x^T w_i + b_i)`.
    /// Shards get `samples / nodes` each, with the remainder going to the first nodes.
    pub fn generate(&self, seed: u64) -> Result<LogisticDataset> {
        if self.nodes == 0 || self.features == 0 {
            return Err(SimError::invalid("synthetic data needs nodes >= 1 and features >= 1"));
        }
        if self.samples < self.nodes {
            return Err(SimError::invalid(format!(
                "samples ({}) must be at least nodes ({}) so that no shard is empty",
                self.samples, self.nodes
            )));
        }
        if !(self.sigma_h >= 0.0) || !self.sigma_h.is_finite() {
            return Err(SimError::invalid(format!(
                "sigma_h must be finite and >= 0, got {}",
                self.sigma_h
            )));
        }
        let d = self.features;
        let mut rng = SeedStream::new(seed).derive("logistic-data").rng();
        let w_star: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let drawn_b: f64 = rng.sample(StandardNormal);
        let b_star = self.fixed_bias.unwrap_or(drawn_b);
        let local = Normal::new(0.0, self.sigma_h).expect("sigma_h validated");
        let base = self.samples / self.nodes;
        let remainder = self.samples % self.nodes;
        let mut shards = Vec::with_capacity(self.nodes);
        for i in 0..self.nodes {
            let w_i: Vec<f64> = w_star.iter().map(|&c| c + local.sample(&mut rng)).collect();
            let b_i = b_star + local.sample(&mut rng);
            let s_i = base + usize::from(i < remainder);
            let features = Matrix::from_fn(s_i, d, |_, _| rng.sample(StandardNormal));
            let labels = features
                .row_iter()
                .map(|x| {
                    if rng.random::<f64>() < sigmoid(dot(x, &w_i) + b_i) {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect();
            shards.push(Shard { features, labels });
        }
        let mut data = LogisticDataset::new(shards, self.lambda)?;
        data.meta = Some(SyntheticMeta {
            sigma_h: self.sigma_h,
            seed,
            w_star,
            b_star,
            remainder,
        });
        Ok(data)
    }
}

/// Synthetic logistic data with the default penalty.
pub fn gen_synthetic_logistic(n: usize, s_total: usize, d: usize, sigma_h: f64, seed: u64) -> Result<LogisticDataset> {
    SyntheticLogistic::new(n, s_total, d, sigma_h).generate(seed)
}

/// Central differences per coordinate; returns `max_j |fd_j - g_j| / max(1, |g_j|)`.
pub fn finite_diff_check(
    value: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    point: &[f64],
    h: f64,
) -> f64 {
    let g = grad(point);
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let orig = x[j];
        x[j] = orig + h;
        let up = value(&x);
        x[j] = orig - h;
        let down = value(&x);
        x[j] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1.0));
    }
    worst
}
