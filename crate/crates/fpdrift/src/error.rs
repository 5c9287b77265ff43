//! Crate-wide error type.

use crate::inversion::NewtonTrace;

/// Errors produced by simulation, assembly, solves, and the study harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A simulated path left the range of `f64` (drift blow-up).
    #[error("simulation produced a non-finite state at step {step}")]
    SimulationDiverged { step: usize },

    /// Thinning or filtering left no usable observations.
    #[error("no observations inside the domain ({discarded} discarded)")]
    NoObservations { discarded: usize },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Operands live on different meshes.
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    /// A linear system was numerically rank-deficient.
    #[error("singular linear system: {0}")]
    SingularSystem(String),

    /// An inner solver ran out of iterations or stalled. The partial Newton
    /// trace is attached so callers can inspect how far the outer iteration
    /// got before the failure.
    #[error("inner solver failed at outer step {outer_step}: {message}")]
    InnerSolveFailed {
        outer_step: usize,
        message: String,
        trace: Box<NewtonTrace>,
    },

    /// Too many Monte-Carlo replications failed for the study to be valid.
    #[error("study aborted: {failed} of {total} replications failed (threshold {threshold:.0}%)")]
    StudyAborted {
        failed: usize,
        total: usize,
        threshold: f64,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("could not parse {what}: {message}")]
    Parse { what: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
