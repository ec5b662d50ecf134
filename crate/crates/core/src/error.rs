use thiserror::Error;

/// Errors raised by the tree engines, the closed-form module and scenario loading.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("node {node}: branch probability {prob} is not strictly positive")]
    NonPositiveProbability { node: u64, prob: f64 },
    #[error("node {node}: children probabilities sum to {sum}, expected 1")]
    ProbabilitySumMismatch { node: u64, sum: f64 },
    #[error("dangling node: {0}")]
    DanglingNode(String),
    #[error("node {node}: numeraire price is {value}, expected 1")]
    NumeraireNotOne { node: u64, value: f64 },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("strategy does not match the tree: {0}")]
    StrategyTreeMismatch(String),
    #[error("claim has {got} values, tree has {expected} leaves")]
    ClaimTreeMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no equivalent martingale measure: arbitrage at node {node}")]
    NoMartingaleMeasure { node: u64 },
    #[error("Newton iteration did not converge after {iterations} steps (gradient norm {grad_norm:e})")]
    NewtonDivergence { iterations: usize, grad_norm: f64 },
    #[error("risk aversion {0} outside [1e-6, 1e6]")]
    GammaOutOfRange(f64),
    #[error("singular Gram matrix (pivot {pivot:e})")]
    SingularGram { pivot: f64 },
    #[error("measure is not a martingale measure for this tree")]
    NotAMartingaleMeasure,
    #[error("measure is not strictly positive")]
    MeasureNotEquivalent,
    #[error("a nonzero combination of the claims is replicable: direction {direction:?}")]
    ReplicableCombination { direction: Vec<f64> },
    #[error("claim is replicable; quantity undefined")]
    DegenerateClaim,
    #[error("quadrature not converged: {coarse} vs {fine}")]
    QuadratureNotConverged { coarse: f64, fine: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

impl Error {
    /// Errors caused by the input (as opposed to a numerical failure).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NewtonDivergence { .. }
                | Error::SingularGram { .. }
                | Error::QuadratureNotConverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
