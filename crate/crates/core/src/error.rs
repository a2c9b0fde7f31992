use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("node {0} has zero degree")]
    ZeroDegree(usize),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix contains a non-finite value at ({0}, {1})")]
    NonFinite(usize, usize),

    #[error("adjacency has a negative weight at ({0}, {1})")]
    NegativeWeight(usize, usize),

    #[error("adjacency has a self-loop at node {0}")]
    SelfLoop(usize),

    #[error("matrix is not p.s.d.: eigenvalue {eigenvalue:e} below -1e-8 * lambda_max ({lambda_max:e})")]
    NotPsd { eigenvalue: f64, lambda_max: f64 },

    #[error("coarsening is not surjective: super-node {0} is empty")]
    NotSurjective(usize),

    #[error("invalid coarsening weight {weight} for node {node}")]
    InvalidWeight { node: usize, weight: f64 },

    #[error("{0}")]
    Unsupported(String),

    #[error("V^T L V is singular (smallest eigenvalue {0:e}); use a positive-definite (shifted) Laplacian or a basis orthogonal to ker(L)")]
    SingularGram(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("mask selects no nodes")]
    EmptyMask,

    #[error("training diverged at epoch {epoch} (loss {loss}); state: {state}")]
    Diverged {
        epoch: usize,
        loss: f64,
        state: String,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
