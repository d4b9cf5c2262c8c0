use thiserror::Error;

/// Errors surfaced by the solver library.
///
/// `Fault` is reserved for broken runtime invariants: a fault means the
/// solver detected a violation of a law it is supposed to maintain, not a
/// problem with the input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("capacities required but not present")]
    MissingCapacities,

    #[error("flow is not an s-t flow: net imbalance {excess} at vertex {vertex}")]
    NotStFlow { vertex: usize, excess: f64 },

    #[error("flow violates conservation at vertex {vertex} (residual {residual})")]
    ConservationViolated { vertex: usize, residual: f64 },

    #[error("nonpositive resistance {value} on arc {arc}")]
    NonpositiveResistance { arc: usize, value: f64 },

    #[error("demand does not sum to zero on component of vertex {vertex} (sum {sum})")]
    UnbalancedComponentDemand { vertex: usize, sum: f64 },

    #[error("potential normalization impossible: sigma^T phi = 0")]
    DegeneratePotentials,

    #[error("target flow value {value} outside [0, {max}]")]
    FlowValueOutOfRange { value: i64, max: i64 },

    #[error("matching leaves vertex {vertex} unsaturated (degree {degree}, demand {demand})")]
    NotPerfect {
        vertex: usize,
        degree: f64,
        demand: f64,
    },

    #[error("instance demand totals differ between sides ({p_total} vs {q_total})")]
    UnbalancedSides { p_total: u64, q_total: u64 },

    #[error("infeasible flow: {0}")]
    InfeasibleFlow(String),

    #[error("slack vector admits no line embedding (arc {arc} off by {residual})")]
    InconsistentSlacks { arc: usize, residual: f64 },

    #[error("brute-force size cap exceeded: |b|_1 = {total}")]
    BruteForceCap { total: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("internal fault [{law}] at step {step}: {detail}")]
    Fault {
        law: &'static str,
        step: usize,
        detail: String,
    },
}

impl Error {
    pub fn fault(law: &'static str, step: usize, detail: impl Into<String>) -> Self {
        Error::Fault {
            law,
            step,
            detail: detail.into(),
        }
    }

    /// True for errors that indicate a broken solver invariant rather than
    /// bad input.
    pub fn is_fault(&self) -> bool {
        matches!(self, Error::Fault { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
