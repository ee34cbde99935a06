//! Generalized linear regression with tensor covariates and low-rank
//! CP-structured coefficients.
//!
//! The model is `g(mu) = alpha + gamma^T z + <[[B_1, ..., B_D]], X>`. It is fit
//! by block relaxation: each factor `B_d` is updated by an ordinary GLM fit on
//! a derived design, so every step reuses the same IRLS kernel.
//!
//! ```
//! use tensorreg::bench::{generate_shape, simulate, ShapeName, ShapeSpec, SimSpec};
//! use tensorreg::glm::GlmFamily;
//! use tensorreg::model::{fit, FitConfig};
//!
//! let signal = generate_shape(&ShapeSpec::new(ShapeName::Square, 8)).unwrap();
//! let data = simulate(&SimSpec::new(signal, vec![1.0], GlmFamily::Normal, 200, 1)).unwrap();
//! let model = fit(&data, GlmFamily::Normal, &FitConfig::with_rank(1)).unwrap();
//! assert_eq!(model.rank(), 1);
//! ```

// `!(x >= y)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod glm;
pub mod model;
pub mod parallel;
pub mod regularization;
pub mod tensor;

pub use error::{Error, Result};
pub use glm::GlmFamily;
pub use model::{fit, select_rank, FitConfig, TensorGlmDataset, TensorGlmModel};
pub use regularization::{PenaltyFamily, PenaltySpec};
pub use tensor::{CpTensor, DenseTensor, Matrix};
