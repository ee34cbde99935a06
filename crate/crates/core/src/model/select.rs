use rayon::prelude::*;
use serde::Serialize;

use super::dataset::TensorGlmDataset;
use super::fit::{estimate_dispersion, fit, penalized_df, FitConfig};
use super::TensorGlmModel;
use crate::error::{Error, Result};
use crate::glm::{log_likelihood, GlmFamily};
use crate::parallel;

/// Effective number of parameters of a rank-R model: the intercept, `p_0`
/// covariates and `R(p_1 + p_2) - R^2` factor parameters for matrices or
/// `R(sum_d p_d - D + 1)` for higher orders.
pub fn effective_parameters(dims: &[usize], rank: usize, p0: usize) -> Result<usize> {
    if rank == 0 {
        return Err(Error::Domain("rank must be at least 1".into()));
    }
    let tensor_part = if dims.len() == 2 {
        (rank * (dims[0] + dims[1])).saturating_sub(rank * rank)
    } else {
        rank * (dims.iter().sum::<usize>() + 1 - dims.len())
    };
    Ok(p0 + 1 + tensor_part)
}

/// Raw parameter count `p_0 + R sum_d p_d`, without identifiability
/// corrections or the intercept.
pub fn raw_parameter_count(dims: &[usize], rank: usize, p0: usize) -> usize {
    p0 + rank * dims.iter().sum::<usize>()
}

/// `-2 loglik + log(n) p_e`, with the log-likelihood recomputed on `dataset`
/// at the model's dispersion.
pub fn bic(model: &TensorGlmModel, dataset: &TensorGlmDataset) -> Result<f64> {
    let eta = model.point().linear_predictors(dataset)?;
    let ll = log_likelihood(model.family, dataset.y(), &eta, model.phi)?;
    let pe = match model.penalty.filter(|p| p.is_active()) {
        Some(_) => penalized_df(&model.coeff, dataset.p0()),
        None => effective_parameters(dataset.dims(), model.rank(), dataset.p0())?,
    };
    Ok(-2.0 * ll + (dataset.n() as f64).ln() * pe as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub rank: usize,
    pub bic: Option<f64>,
    pub loglik: Option<f64>,
    pub effective_parameters: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RankSelection {
    pub model: TensorGlmModel,
    pub table: Vec<RankRow>,
}

impl RankSelection {
    pub fn selected_rank(&self) -> usize {
        self.model.rank()
    }
}

/// Fits ranks `1..=max_rank` and keeps the smallest BIC; ties go to the
/// smaller rank. Ranks whose fit fails are recorded and skipped. A fit that
/// ran out of outer iterations still competes, flagged as not converged.
pub fn select_rank(
    dataset: &TensorGlmDataset,
    family: GlmFamily,
    max_rank: usize,
    config: &FitConfig,
) -> Result<RankSelection> {
    if max_rank == 0 {
        return Err(Error::Domain("max_rank must be at least 1".into()));
    }
    let fits: Vec<Result<TensorGlmModel>> = parallel::install(|| {
        (1..=max_rank)
            .into_par_iter()
            .map(|rank| {
                let cfg = FitConfig {
                    rank,
                    ..config.clone()
                };
                match fit(dataset, family, &cfg) {
                    Err(Error::NotConverged { model }) => Ok(*model),
                    other => other,
                }
            })
            .collect()
    });

    let mut table = Vec::with_capacity(max_rank);
    let mut best: Option<TensorGlmModel> = None;
    let mut first_err = None;
    for (k, result) in fits.into_iter().enumerate() {
        let rank = k + 1;
        let pe = effective_parameters(dataset.dims(), rank, dataset.p0())?;
        match result {
            Ok(model) => {
                table.push(RankRow {
                    rank,
                    bic: Some(model.bic),
                    loglik: Some(model.loglik),
                    effective_parameters: model.df,
                    converged: model.converged,
                    error: None,
                });
                if best.as_ref().is_none_or(|b| model.bic < b.bic) {
                    best = Some(model);
                }
            }
            Err(e) => {
                log::warn!("rank {rank} fit failed: {e}");
                table.push(RankRow {
                    rank,
                    bic: None,
                    loglik: None,
                    effective_parameters: pe,
                    converged: false,
                    error: Some(e.to_string()),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(model) => Ok(RankSelection { model, table }),
        None => Err(first_err.expect("every rank failed")),
    }
}

/// Dispersion re-estimate used when a model is evaluated on new data.
#[allow(dead_code)]
pub(crate) fn dispersion_on(model: &TensorGlmModel, dataset: &TensorGlmDataset) -> Result<f64> {
    let eta = model.point().linear_predictors(dataset)?;
    Ok(estimate_dispersion(model.family, dataset.y(), &eta, model.df))
}
