//! The rank-R generalized linear tensor regression model
//! `g(mu) = alpha + gamma^T z + <[[B_1, ..., B_D]], X>`.

mod dataset;
mod derivatives;
mod document;
mod fit;
mod identify;
mod select;
mod uniqueness;

pub use dataset::{build_block_design, TensorGlmDataset};
pub use derivatives::{
    eta_gradient, eta_hessian, information_matrix, log_density_hessian, log_likelihood_at, score_and_information,
    score_vector, InferenceReport, ParamKey,
};
pub use document::ModelDocument;
pub use fit::{fit, fit_from, FitConfig};
pub use identify::{normalize_identifiability, normalize_with_fallback, order_components};
pub use select::{bic, effective_parameters, raw_parameter_count, select_rank, RankRow, RankSelection};
pub use uniqueness::{check_uniqueness, k_rank, matrix_rank, UniquenessReport};

pub(crate) use fit::block_update;
#[cfg(test)]
pub(crate) use fit::objective;

use nalgebra::DVector;

use crate::error::{domain, Result};
use crate::glm::{GlmFamily, GlmProblem};
use crate::regularization::PenaltySpec;
use crate::tensor::{algebra_dot, cp_to_full, CpTensor, DenseTensor};

/// A parameter point `(alpha, gamma, B_1, ..., B_D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub coeff: CpTensor,
}

impl ParameterPoint {
    fn check(&self, dataset: &TensorGlmDataset) -> Result<()> {
        if self.coeff.dims() != dataset.dims() {
            return domain(format!(
                "coefficient dims {:?} do not match covariate dims {:?}",
                self.coeff.dims(),
                dataset.dims()
            ));
        }
        if self.gamma.len() != dataset.p0() {
            return domain(format!(
                "{} covariate coefficients for {} covariates",
                self.gamma.len(),
                dataset.p0()
            ));
        }
        Ok(())
    }

    /// `<B, x_i>` for every sample.
    pub fn tensor_predictors(&self, dataset: &TensorGlmDataset) -> Result<Vec<f64>> {
        self.check(dataset)?;
        let full = cp_to_full(&self.coeff);
        Ok(dataset
            .x()
            .iter()
            .map(|x| algebra_dot(full.as_slice(), x.as_slice()))
            .collect())
    }

    /// `alpha + gamma^T z_i` for every sample.
    pub fn covariate_predictors(&self, dataset: &TensorGlmDataset) -> Vec<f64> {
        let z = dataset.z();
        (0..dataset.n())
            .map(|i| self.alpha + (0..z.ncols()).map(|j| z[(i, j)] * self.gamma[j]).sum::<f64>())
            .collect()
    }

    pub fn linear_predictors(&self, dataset: &TensorGlmDataset) -> Result<Vec<f64>> {
        let t = self.tensor_predictors(dataset)?;
        Ok(self
            .covariate_predictors(dataset)
            .into_iter()
            .zip(t)
            .map(|(a, b)| a + b)
            .collect())
    }

    /// `(alpha, gamma)` stacked.
    pub fn covariate_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            1 + self.gamma.len(),
            std::iter::once(self.alpha).chain(self.gamma.iter().copied()),
        )
    }

    /// Linear predictor of a single observation.
    pub fn predict_eta(&self, x: &DenseTensor, z: &[f64]) -> Result<f64> {
        if x.dims() != self.coeff.dims() || z.len() != self.gamma.len() {
            return domain("observation shape does not match the model");
        }
        let full = cp_to_full(&self.coeff);
        let cov: f64 = z.iter().zip(&self.gamma).map(|(a, b)| a * b).sum();
        Ok(self.alpha + cov + algebra_dot(full.as_slice(), x.as_slice()))
    }
}

/// A fitted rank-R tensor GLM. `coeff` is in normalized form.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGlmModel {
    pub family: GlmFamily,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub coeff: CpTensor,
    /// Dispersion; estimated for the normal family, 1 otherwise.
    pub phi: f64,
    /// Log-likelihood at the fitted point and `phi`.
    pub loglik: f64,
    /// Final working objective (log-likelihood at `phi = 1` minus penalty).
    pub objective: f64,
    pub bic: f64,
    /// Parameter count used by the BIC.
    pub df: usize,
    pub n: usize,
    /// Working objective after initialization and after every sweep.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub restarts_used: usize,
    pub best_restart: usize,
    pub penalty: Option<PenaltySpec>,
    pub warnings: Vec<String>,
}

impl TensorGlmModel {
    pub fn rank(&self) -> usize {
        self.coeff.rank()
    }

    /// Largest decrease between consecutive objective values in the trace;
    /// zero for a monotone trace.
    pub fn max_trace_drop(&self) -> f64 {
        self.trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }

    pub fn point(&self) -> ParameterPoint {
        ParameterPoint {
            alpha: self.alpha,
            gamma: self.gamma.clone(),
            coeff: self.coeff.clone(),
        }
    }

    pub fn predict_eta(&self, x: &DenseTensor, z: &[f64]) -> Result<f64> {
        self.point().predict_eta(x, z)
    }

    /// Predicted mean `mu = g^{-1}(eta)`.
    pub fn predict_mean(&self, x: &DenseTensor, z: &[f64]) -> Result<f64> {
        Ok(self.family.mean(self.predict_eta(x, z)?))
    }

    /// Log-likelihood through the block design of `mode` rather than the full
    /// tensor; the two routes agree up to rounding.
    pub fn loglik_via_block(&self, dataset: &TensorGlmDataset, mode: usize) -> Result<f64> {
        let design = build_block_design(dataset, &self.coeff, mode)?;
        let offset = self.point().covariate_predictors(dataset);
        let problem = GlmProblem::new(&design, dataset.y(), self.family, &offset)?;
        problem.loglik(&DVector::from_column_slice(self.coeff.factor(mode).as_slice()), self.phi)
    }
}
