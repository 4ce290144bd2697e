use std::fmt;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tensor key: {0}")]
    InvalidKey(String),

    #[error("invalid entry value {value} (entries must be finite and nonnegative)")]
    InvalidValue { value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("missing scaling potential for tail set {tail:?}")]
    MissingPotential { tail: Vec<u32> },

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed document: {0}")]
    Parse(String),

    #[error("infeasible constraints: {0}")]
    Infeasible(Infeasibility),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Why a projection problem was declared infeasible.
#[derive(Clone, Debug, PartialEq)]
pub struct Infeasibility {
    pub reason: InfeasibilityReason,
    /// 0-based node indices implicated in the failure.
    pub nodes: Vec<usize>,
    /// Joint residual at the point of failure, when an iteration was run.
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InfeasibilityReason {
    /// Positive prescribed mass on a pivot without outgoing support.
    NoOutgoingSupport,
    /// Node never appears on the receiving side of an active layer.
    NeverReceives,
    /// Tail tuples outside the support carry prescribed mass, so the
    /// polynomial map cannot conserve it.
    ContextMassDeficit { covered: f64 },
    /// Scaling potentials diverged while the residual stalled.
    DivergentPotentials { log_spread: f64 },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes: Vec<String> = self.nodes.iter().map(|j| (j + 1).to_string()).collect();
        match &self.reason {
            InfeasibilityReason::NoOutgoingSupport => {
                write!(f, "nodes [{}] carry mass but have no outgoing support", nodes.join(", "))
            }
            InfeasibilityReason::NeverReceives => {
                write!(f, "nodes [{}] never receive in any active layer", nodes.join(", "))
            }
            InfeasibilityReason::ContextMassDeficit { covered } => write!(
                f,
                "supported contexts cover only {covered:.6} of the tail-tuple mass (need 1)"
            ),
            InfeasibilityReason::DivergentPotentials { log_spread } => {
                write!(f, "scaling potentials diverged (log spread {log_spread:.1})")?;
                if !nodes.is_empty() {
                    write!(f, "; worst nodes [{}]", nodes.join(", "))?;
                }
                if let Some(r) = self.residual {
                    write!(f, "; residual {r:.3e}")?;
                }
                Ok(())
            }
        }
    }
}
