//! Average consensus and decentralized gradient descent over time-varying
//! broadcast networks, using only row-stochastic (receiver-normalized) mixing.
//!
//! The crate is organised bottom-up:
//!
//! - [`topology`]: per-round directed graphs, edge dropout and post-send packet loss.
//! - [`mixing`]: row/column-stochastic matrices, window products, `(B, eta)` certificates,
//!   Perron vectors.
//! - [`consensus`]: the adjust-gossip distribution-matrix recursion, node-wise PULM,
//!   plain pull gossip and push-sum.
//! - [`objectives`]: local objectives (non-convex logistic regression, quadratics) and
//!   synthetic data.
//! - [`optimization`]: PULM-DGD, push-DIGing and centralized gradient descent.
//! - [`harness`]: config files, CSV traces, calibration and certification drivers.
//!
//! Every run is a deterministic function of its configuration and seed.

// NaN-rejecting checks are written as negated comparisons (`!(x >= 0.0)`) on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consensus;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mixing;
pub mod objectives;
pub mod optimization;
pub mod rng;
pub mod topology;
pub mod trace;

pub use error::{Result, SimError};
pub use linalg::Matrix;
