//! Per-round metric records emitted by the simulators.

use std::fmt;

/// Outcome flag carried by every record. Divergence and collapse are results, not errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Ok,
    /// A non-finite coordinate appeared; the run halted.
    Diverged,
    /// A push-family weight dropped below the representable floor; the run halted.
    NumericalCollapse,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Diverged => "diverged",
            Status::NumericalCollapse => "numerical-collapse",
        }
    }

    pub fn is_ok(self) -> bool {
        self == Status::Ok
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of a consensus trace, taken after `round` communication rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusRecord {
    pub round: usize,
    /// `||W - E_n||_F` for the run's distribution matrix.
    pub w_error: f64,
    /// `max_ij |W_ij - 1/n|`.
    pub w_max_deviation: f64,
    /// Relative distance to the exact average; `None` when the input is already consensual.
    pub consensus_error: Option<f64>,
    /// Largest per-coordinate gap between node values.
    pub spread: f64,
    /// Total push-sum weight; `None` for pull-based algorithms.
    pub weight_sum: Option<f64>,
    pub status: Status,
}

/// One row of an optimization trace, taken at the start of outer iteration `outer_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub outer_k: usize,
    /// Communication rounds spent before this point.
    pub inner_total: usize,
    /// `f(x_bar)`.
    pub loss_mean: f64,
    /// `||grad f(x_bar)||^2`.
    pub grad_norm_sq: f64,
    pub param_consensus_error: f64,
    pub status: Status,
}

/// Fixed-schema CSV row.
pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

impl CsvRecord for ConsensusRecord {
    fn header() -> &'static [&'static str] {
        &[
            "round",
            "w_error",
            "w_max_deviation",
            "consensus_error",
            "spread",
            "weight_sum",
            "status",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.round.to_string(),
            format_f64(self.w_error),
            format_f64(self.w_max_deviation),
            format_opt(self.consensus_error),
            format_f64(self.spread),
            format_opt(self.weight_sum),
            self.status.to_string(),
        ]
    }
}

impl CsvRecord for TrajectoryRecord {
    fn header() -> &'static [&'static str] {
        &[
            "outer_k",
            "inner_total",
            "loss_mean",
            "grad_norm_sq",
            "param_consensus_error",
            "status",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.outer_k.to_string(),
            self.inner_total.to_string(),
            format_f64(self.loss_mean),
            format_f64(self.grad_norm_sq),
            format_f64(self.param_consensus_error),
            self.status.to_string(),
        ]
    }
}
