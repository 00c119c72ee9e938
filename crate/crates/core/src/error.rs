use thiserror::Error;

use crate::solver::IterationTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },

    #[error("record {index} has zero likelihood weight on every grid point")]
    InfeasibleRecord { index: usize },

    #[error("likelihood term of observation {index} is zero at the evaluation point")]
    InfeasiblePoint { index: usize },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("normal equations are singular on support {support:?}")]
    RankDeficient { support: Vec<i64> },

    #[error("line search found no acceptable step above 1e-15")]
    LineSearchFailure,

    #[error("solver did not converge within {} outer iterations", .trace.rows.len())]
    NonConvergence { trace: Box<IterationTrace> },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{failed} of {total} bootstrap replicates failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
