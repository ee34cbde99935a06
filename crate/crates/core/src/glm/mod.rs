//! Exponential-family GLMs with canonical links and the IRLS / coordinate
//! descent solvers used for every block update.

mod family;
mod solver;

pub use family::{log_likelihood, GlmFamily};
pub use solver::{irls_fit, penalized_fit, GlmFit, GlmProblem, SolverOptions};
