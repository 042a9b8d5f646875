use thiserror::Error;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

/// Errors raised by the simulation library.
///
/// Runtime outcomes such as divergence or weight collapse are *not* errors; they
/// are reported through [`Status`](crate::trace::Status) in the traces.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("certification failed: no window of length <= {budget} is entrywise positive over {len} matrices")]
    CertificationFailed { budget: usize, len: usize },

    #[error(
        "matrix is not primitive: power iteration did not converge in {iterations} iterations (residual {residual:e})"
    )]
    NotPrimitive { iterations: usize, residual: f64 },

    #[error("protocol violation at node {node}: positive weight on sender {sender} that sent nothing")]
    ProtocolViolation { node: usize, sender: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
}

impl SimError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SimError::InvalidArgument(msg.into())
    }
}
