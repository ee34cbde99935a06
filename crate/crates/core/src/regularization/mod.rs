//! Penalized estimation: scalar penalties, their thresholding rules, penalized
//! block updates and tuning of `rho`.

mod penalty;

pub use penalty::{
    penalty_derivatives, penalty_value, threshold_update, PenaltyFamily, PenaltySpec, BRIDGE_DEFAULT_LAMBDA, ELASTIC_NET_DEFAULT_LAMBDA,
    SCAD_DEFAULT_LAMBDA,
};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::glm::{log_likelihood, GlmFamily, SolverOptions};
use crate::model::{block_update, fit, FitConfig, ParameterPoint, TensorGlmDataset, TensorGlmModel};
use crate::parallel;
use crate::tensor::Matrix;

/// Maximizes the penalized log-likelihood over factor `mode` with `alpha`,
/// `gamma` and the other factors held at `point`. The intercept, covariates
/// and the first rows fixed by normalization are never penalized.
pub fn penalized_block_update(
    dataset: &TensorGlmDataset,
    point: &ParameterPoint,
    mode: usize,
    spec: &PenaltySpec,
    family: GlmFamily,
    opts: &SolverOptions,
) -> Result<Matrix> {
    let penalty = Some(spec).filter(|p| p.is_active());
    block_update(dataset, family, point, mode, penalty, opts)
}

/// `k` values log-spaced from `hi` down to `lo`, optionally followed by 0.
pub fn rho_grid(lo: f64, hi: f64, k: usize, include_zero: bool) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || k == 0 {
        return domain(format!("invalid rho grid [{lo}, {hi}] with {k} points"));
    }
    let mut grid: Vec<f64> = if k == 1 {
        vec![hi]
    } else {
        let (a, b) = (hi.ln(), lo.ln());
        (0..k).map(|j| (a + (b - a) * j as f64 / (k - 1) as f64).exp()).collect()
    };
    if include_zero {
        grid.push(0.0);
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TuningCriterion {
    /// BIC with the penalized degrees of freedom.
    Bic,
    /// Held-out log-likelihood; observation `i` belongs to fold `i mod folds`.
    CrossValidation { folds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyRow {
    pub rho: f64,
    /// BIC (lower is better) or total held-out log-likelihood (higher is better).
    pub criterion: Option<f64>,
    pub df: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PenaltySelection {
    pub model: TensorGlmModel,
    pub rho: f64,
    pub table: Vec<PenaltyRow>,
}

fn fit_lenient(dataset: &TensorGlmDataset, family: GlmFamily, config: &FitConfig) -> Result<TensorGlmModel> {
    match fit(dataset, family, config) {
        Err(Error::NotConverged { model }) => Ok(*model),
        other => other,
    }
}

/// Chooses `rho` for the penalty family of `template` over `rhos`. Ties go to
/// the larger `rho` (the sparser model) for BIC and to the earlier grid entry
/// for cross-validation.
pub fn select_penalty(
    dataset: &TensorGlmDataset,
    family: GlmFamily,
    config: &FitConfig,
    template: PenaltySpec,
    rhos: &[f64],
    criterion: TuningCriterion,
) -> Result<PenaltySelection> {
    if rhos.is_empty() {
        return domain("empty rho grid");
    }
    let specs = rhos.iter().map(|&r| template.with_rho(r)).collect::<Result<Vec<_>>>()?;
    let config_for = |p: PenaltySpec| FitConfig {
        penalty: Some(p),
        ..config.clone()
    };

    let scored: Vec<(Option<f64>, Option<usize>, Option<String>)> = match criterion {
        TuningCriterion::Bic => parallel::install(|| {
            specs
                .par_iter()
                .map(|&p| match fit_lenient(dataset, family, &config_for(p)) {
                    Ok(m) => (Some(m.bic), Some(m.df), None),
                    Err(e) => (None, None, Some(e.to_string())),
                })
                .collect()
        }),
        TuningCriterion::CrossValidation { folds } => {
            if folds < 2 || folds > dataset.n() {
                return domain(format!("cross-validation needs 2 <= folds <= n, got {folds}"));
            }
            parallel::install(|| {
                specs
                    .par_iter()
                    .map(|&p| match cv_score(dataset, family, &config_for(p), folds) {
                        Ok(s) => (Some(s), None, None),
                        Err(e) => (None, None, Some(e.to_string())),
                    })
                    .collect()
            })
        }
    };

    let mut table = Vec::with_capacity(rhos.len());
    let mut best: Option<(usize, f64)> = None;
    for (j, (crit, df, error)) in scored.into_iter().enumerate() {
        if let Some(c) = crit {
            let better = match (criterion, best) {
                (_, None) => true,
                (TuningCriterion::Bic, Some((b, v))) => c < v || (c == v && rhos[j] > rhos[b]),
                (TuningCriterion::CrossValidation { .. }, Some((_, v))) => c > v,
            };
            if better {
                best = Some((j, c));
            }
        }
        table.push(PenaltyRow {
            rho: rhos[j],
            criterion: crit,
            df,
            error,
        });
    }
    let Some((j, _)) = best else {
        return Err(Error::Numeric("every rho on the grid failed to fit".into()));
    };
    let model = fit_lenient(dataset, family, &config_for(specs[j]))?;
    Ok(PenaltySelection {
        model,
        rho: rhos[j],
        table,
    })
}

fn cv_score(dataset: &TensorGlmDataset, family: GlmFamily, config: &FitConfig, folds: usize) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..dataset.n()).partition(|i| i % folds == f);
        let model = fit_lenient(&dataset.subset(&train)?, family, config)?;
        let held = dataset.subset(&test)?;
        let eta = model.point().linear_predictors(&held)?;
        total += log_likelihood(family, held.y(), &eta, model.phi)?;
    }
    Ok(total)
}
