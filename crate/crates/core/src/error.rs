use thiserror::Error;

use crate::model::TensorGlmModel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of an operation (bad index, shape mismatch, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// Normal equations of a GLM subproblem are singular.
    #[error("singular design{}: {columns} columns but numerical rank {rank}", block_label(.block))]
    Singular {
        block: Option<usize>,
        columns: usize,
        rank: usize,
    },

    /// IRLS hit its iteration cap. `last` holds the final iterate.
    #[error("no convergence after {iterations} iterations")]
    MaxIterations { iterations: usize, last: Vec<f64> },

    /// Every restart of the block relaxation ran out of outer iterations.
    /// The best model is still attached.
    #[error("block relaxation did not converge in any restart (best loglik {:.6})", .model.loglik)]
    NotConverged { model: Box<TensorGlmModel> },

    #[error("degenerate normalization: {0}")]
    DegenerateNormalization(String),

    #[error("information matrix is singular: rank {rank} of {dim}")]
    SingularInformation { rank: usize, dim: usize },

    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn block_label(block: &Option<usize>) -> String {
    match block {
        Some(d) => format!(" in block {}", d + 1),
        None => String::new(),
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
