use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dependency edge ({0}, {1}) has no supporting communication edge")]
    SubgraphViolation(usize, usize),
    #[error("invalid edge ({0}, {1}) for a network of {2} nodes")]
    InvalidEdge(usize, usize, usize),
    #[error("dependency graph contains a cycle; tree formulas do not apply")]
    CyclicDependency,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("edge ({0}, {1}) has c_ii*c_jj - c_ij^2 <= 0")]
    SingularPair(usize, usize),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("support size {support} exceeds dimension {dim}")]
    InvalidSupport { support: usize, dim: usize },
    #[error("estimate diverged at node {node}")]
    Diverged { node: usize },
    #[error("invalid threshold spec: {0}")]
    InvalidSpec(String),
    #[error("inconsistent model: max |BC - I| = {0:e}")]
    InconsistentModel(f64),
    #[error("dense materialization of size {dim} exceeds the cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("transition matrix is unstable (spectral radius {0})")]
    Unstable(f64),
    #[error("fixed-point iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("combination matrix violates its constraints: {0}")]
    InvalidCombination(String),
}

pub type Result<T> = std::result::Result<T, Error>;
