//! Block relaxation for the rank-R tensor GLM.
//!
//! Each sweep updates `B_1, ..., B_D` in turn by an ordinary (or penalized)
//! GLM fit on the block design, then refits `(alpha, gamma)`. A block update
//! is kept only if it does not lower the objective, so every trace is
//! nondecreasing.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::dataset::{build_block_design, TensorGlmDataset};
use super::identify::{normalize_with_fallback, order_components};
use super::select::effective_parameters;
use super::{ParameterPoint, TensorGlmModel};
use crate::error::{Error, Result};
use crate::glm::{log_likelihood, GlmFamily, GlmProblem, SolverOptions};
use crate::parallel;
use crate::regularization::{penalty_value, PenaltySpec};
use crate::tensor::{CpTensor, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub rank: usize,
    /// Outer stopping tolerance: stop once a sweep gains less than
    /// `epsilon * (1 + |objective|)`.
    pub epsilon: f64,
    pub max_outer_iters: usize,
    /// Independent random initializations; the best final objective wins.
    pub restarts: usize,
    pub seed: u64,
    pub penalty: Option<PenaltySpec>,
    pub solver: SolverOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rank: 1,
            epsilon: 1e-6,
            max_outer_iters: 500,
            restarts: 5,
            seed: 0,
            penalty: None,
            solver: SolverOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn with_rank(rank: usize) -> Self {
        Self {
            rank,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Domain("rank must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.restarts == 0 || self.max_outer_iters == 0 {
            return Err(Error::Domain("restarts and max_outer_iters must be at least 1".into()));
        }
        Ok(())
    }

    fn active_penalty(&self) -> Option<&PenaltySpec> {
        self.penalty.as_ref().filter(|p| p.is_active())
    }
}

/// Coefficients of mode `d` exempt from the penalty: the first rows of
/// `B_1..B_{D-1}`, which normalization fixes to one.
pub(crate) fn unpenalized_mask(dims: &[usize], rank: usize, mode: usize) -> Vec<bool> {
    let rows = dims[mode];
    let fixed_first_row = dims.len() >= 2 && mode + 1 < dims.len();
    (0..rows * rank).map(|j| fixed_first_row && j % rows == 0).collect()
}

pub(crate) fn factor_penalty(coeff: &CpTensor, penalty: Option<&PenaltySpec>) -> f64 {
    let Some(p) = penalty else { return 0.0 };
    let mut total = 0.0;
    for d in 0..coeff.order() {
        let mask = unpenalized_mask(coeff.dims(), coeff.rank(), d);
        total += coeff
            .factor(d)
            .iter()
            .zip(&mask)
            .filter(|(_, &u)| !u)
            .map(|(&b, _)| penalty_value(p, b))
            .sum::<f64>();
    }
    total
}

/// Working objective: log-likelihood at `phi = 1` minus the factor penalty.
pub(crate) fn objective(
    dataset: &TensorGlmDataset,
    family: GlmFamily,
    point: &ParameterPoint,
    penalty: Option<&PenaltySpec>,
) -> Result<f64> {
    let eta = point.linear_predictors(dataset)?;
    Ok(log_likelihood(family, dataset.y(), &eta, 1.0)? - factor_penalty(&point.coeff, penalty))
}

struct RunOutcome {
    point: ParameterPoint,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Fits the rank-R tensor GLM by block relaxation from `config.restarts`
/// random starts and returns the normalized best fit.
pub fn fit(dataset: &TensorGlmDataset, family: GlmFamily, config: &FitConfig) -> Result<TensorGlmModel> {
    config.validate()?;
    family.validate_response(dataset.y())?;
    if config.active_penalty().is_none() {
        check_block_sizes(dataset, config.rank)?;
    }

    let runs: Vec<Result<RunOutcome>> = parallel::install(|| {
        (0..config.restarts)
            .into_par_iter()
            .map(|k| run_once(dataset, family, config, k))
            .collect()
    });

    let mut best: Option<(usize, RunOutcome)> = None;
    let mut first_err = None;
    let mut any_converged = false;
    for (k, run) in runs.into_iter().enumerate() {
        match run {
            Ok(out) => {
                any_converged |= out.converged;
                let better = best.as_ref().is_none_or(|(_, b)| {
                    (out.converged && !b.converged)
                        || (out.converged == b.converged && last(&out.trace) > last(&b.trace))
                });
                if better {
                    best = Some((k, out));
                }
            }
            Err(e) => {
                log::debug!("restart {k} failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((best_restart, outcome)) = best else {
        return Err(first_err.expect("at least one restart"));
    };
    let model = finalize(dataset, family, config, outcome, best_restart)?;
    if any_converged {
        Ok(model)
    } else {
        Err(Error::NotConverged {
            model: Box::new(model),
        })
    }
}

fn last(trace: &[f64]) -> f64 {
    *trace.last().expect("trace starts with the initial objective")
}

fn check_block_sizes(dataset: &TensorGlmDataset, rank: usize) -> Result<()> {
    let n = dataset.n();
    for (d, &p) in dataset.dims().iter().enumerate() {
        if n < p * rank {
            return Err(Error::Singular {
                block: Some(d),
                columns: p * rank,
                rank: n,
            });
        }
    }
    if n < dataset.p0() + 1 {
        return Err(Error::Singular {
            block: None,
            columns: dataset.p0() + 1,
            rank: n,
        });
    }
    Ok(())
}

/// Random start: iid standard normal entries, each column scaled to unit norm.
pub(crate) fn random_factors(dims: &[usize], rank: usize, rng: &mut ChaCha8Rng) -> CpTensor {
    let factors = dims
        .iter()
        .map(|&p| {
            let mut m = Matrix::from_fn(p, rank, |_, _| StandardNormal.sample(rng));
            for mut col in m.column_iter_mut() {
                let norm = col.norm();
                if norm > 0.0 {
                    col.unscale_mut(norm);
                }
            }
            m
        })
        .collect();
    CpTensor::new(factors).expect("valid shapes")
}

/// Runs block relaxation once from the given factors instead of random starts.
pub fn fit_from(
    dataset: &TensorGlmDataset,
    family: GlmFamily,
    config: &FitConfig,
    start: &CpTensor,
) -> Result<TensorGlmModel> {
    config.validate()?;
    family.validate_response(dataset.y())?;
    if start.dims() != dataset.dims() || start.rank() != config.rank {
        return Err(Error::Domain(format!(
            "start has dims {:?} and rank {}, expected {:?} and rank {}",
            start.dims(),
            start.rank(),
            dataset.dims(),
            config.rank
        )));
    }
    let outcome = run_from(dataset, family, config, start.clone())?;
    let converged = outcome.converged;
    let config = FitConfig {
        restarts: 1,
        ..config.clone()
    };
    let model = finalize(dataset, family, &config, outcome, 0)?;
    if converged {
        Ok(model)
    } else {
        Err(Error::NotConverged {
            model: Box::new(model),
        })
    }
}

fn run_once(dataset: &TensorGlmDataset, family: GlmFamily, config: &FitConfig, restart: usize) -> Result<RunOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);
    let start = random_factors(dataset.dims(), config.rank, &mut rng);
    run_from(dataset, family, config, start)
}

fn run_from(dataset: &TensorGlmDataset, family: GlmFamily, config: &FitConfig, start: CpTensor) -> Result<RunOutcome> {
    let penalty = config.active_penalty();
    let opts = &config.solver;

    let zeros = vec![0.0; dataset.n()];
    let (alpha, gamma) = covariate_update(dataset, family, &zeros, None, opts)?;
    let mut point = ParameterPoint {
        alpha,
        gamma,
        coeff: start,
    };
    let mut current = objective(dataset, family, &point, penalty)?;
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.max_outer_iters {
        iterations += 1;
        let previous = current;
        for d in 0..point.coeff.order() {
            let factor = block_update(dataset, family, &point, d, penalty, opts)?;
            let mut candidate = point.clone();
            candidate.coeff.set_factor(d, factor)?;
            accept_if_better(dataset, family, penalty, &mut point, &mut current, candidate);
        }

        let tensor_part = point.tensor_predictors(dataset)?;
        let start = point.covariate_vector();
        let (alpha, gamma) = covariate_update(dataset, family, &tensor_part, Some(&start), opts)?;
        let candidate = ParameterPoint {
            alpha,
            gamma,
            coeff: point.coeff.clone(),
        };
        accept_if_better(dataset, family, penalty, &mut point, &mut current, candidate);

        if let Some(spec) = penalty {
            let candidate = balance_scales(&point, spec);
            accept_if_better(dataset, family, penalty, &mut point, &mut current, candidate);
        }

        trace.push(current);
        if current - previous < config.epsilon * (1.0 + previous.abs()) {
            converged = true;
            break;
        }
    }
    Ok(RunOutcome {
        point,
        trace,
        converged,
        iterations,
    })
}

/// Rescales each component across modes, which leaves the tensor (and so the
/// likelihood) unchanged, to lower the penalty. Block updates alone move this
/// balance very slowly. Each mode is paired with the last one and the log
/// scale is found by golden-section search.
fn balance_scales(point: &ParameterPoint, spec: &PenaltySpec) -> ParameterPoint {
    let order = point.coeff.order();
    let mut out = point.clone();
    if order < 2 {
        return out;
    }
    let dims = point.coeff.dims().to_vec();
    let rank = point.coeff.rank();
    let mut factors: Vec<Matrix> = point.coeff.factors().to_vec();
    let last = order - 1;
    let masks: Vec<Vec<bool>> = (0..order).map(|d| unpenalized_mask(&dims, rank, d)).collect();
    let penalized = |d: usize, r: usize, f: &[Matrix]| -> Vec<f64> {
        let p = dims[d];
        (0..p).filter(|&i| !masks[d][r * p + i]).map(|i| f[d][(i, r)]).collect()
    };
    for r in 0..rank {
        for d in 0..last {
            let a = penalized(d, r, &factors);
            let b = penalized(last, r, &factors);
            if a.iter().all(|&v| v == 0.0) || b.iter().all(|&v| v == 0.0) {
                continue;
            }
            let cost = |s: f64| -> f64 {
                let (up, down) = (s.exp(), (-s).exp());
                a.iter().map(|&v| penalty_value(spec, v * up)).sum::<f64>()
                    + b.iter().map(|&v| penalty_value(spec, v * down)).sum::<f64>()
            };
            let s = golden_section(&cost, -BALANCE_LOG_RANGE, BALANCE_LOG_RANGE);
            if cost(s) < cost(0.0) {
                factors[d].column_mut(r).scale_mut(s.exp());
                factors[last].column_mut(r).scale_mut((-s).exp());
            }
        }
    }
    out.coeff = CpTensor::new(factors).expect("shapes unchanged");
    out
}

/// Log-scale search range of one balancing pass.
const BALANCE_LOG_RANGE: f64 = 5.0;

/// Minimizer of a unimodal function on `[lo, hi]`.
fn golden_section(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if hi - lo <= 1e-12 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn accept_if_better(
    dataset: &TensorGlmDataset,
    family: GlmFamily,
    penalty: Option<&PenaltySpec>,
    point: &mut ParameterPoint,
    current: &mut f64,
    candidate: ParameterPoint,
) {
    if let Ok(value) = objective(dataset, family, &candidate, penalty) {
        if value >= *current {
            *point = candidate;
            *current = value;
        }
    }
}

/// Maximizes the (penalized) likelihood over factor `mode` with everything
/// else held fixed, warm-started at the current factor.
pub(crate) fn block_update(
    dataset: &TensorGlmDataset,
    family: GlmFamily,
    point: &ParameterPoint,
    mode: usize,
    penalty: Option<&PenaltySpec>,
    opts: &SolverOptions,
) -> Result<Matrix> {
    let design = build_block_design(dataset, &point.coeff, mode)?;
    let offset = point.covariate_predictors(dataset);
    let current = point.coeff.factor(mode);
    let start = DVector::from_column_slice(current.as_slice());
    let problem = GlmProblem::new(&design, dataset.y(), family, &offset)?;
    let result = match penalty {
        Some(p) => {
            let mask = unpenalized_mask(point.coeff.dims(), point.coeff.rank(), mode);
            problem.penalized(p, &mask, Some(&start), opts)
        }
        None => problem.irls(Some(&start), opts),
    };
    let coefs = match result {
        Ok(fit) => fit.coefficients,
        Err(Error::MaxIterations { last, .. }) => DVector::from_vec(last),
        Err(Error::Singular { columns, rank, .. }) => {
            return Err(Error::Singular {
                block: Some(mode),
                columns,
                rank,
            })
        }
        Err(e) => return Err(e),
    };
    Ok(Matrix::from_column_slice(current.nrows(), current.ncols(), coefs.as_slice()))
}

fn covariate_update(
    dataset: &TensorGlmDataset,
    family: GlmFamily,
    offset: &[f64],
    start: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<(f64, Vec<f64>)> {
    let problem = GlmProblem::new(dataset.covariate_design(), dataset.y(), family, offset)?;
    let coefs = match problem.irls(start, opts) {
        Ok(fit) => fit.coefficients,
        Err(Error::MaxIterations { last, .. }) => DVector::from_vec(last),
        Err(e) => return Err(e),
    };
    Ok((coefs[0], coefs.iter().skip(1).copied().collect()))
}

/// Pearson estimate `sum (y - mu)^2 / V(mu) / (n - df)` for the normal
/// family; the other families fix `phi = 1`.
pub(crate) fn estimate_dispersion(family: GlmFamily, y: &[f64], eta: &[f64], df: usize) -> f64 {
    if family.dispersion_fixed() {
        return 1.0;
    }
    let pearson: f64 = y
        .iter()
        .zip(eta)
        .map(|(&yi, &e)| {
            let mu = family.mean(e);
            (yi - mu).powi(2) / family.variance(mu)
        })
        .sum();
    let n = y.len();
    let denom = if n > df { n - df } else { n };
    (pearson / denom as f64).max(f64::MIN_POSITIVE)
}

/// Degrees of freedom of a penalized fit: nonzero free factor entries plus
/// the intercept and ordinary covariates.
pub(crate) fn penalized_df(coeff: &CpTensor, p0: usize) -> usize {
    let mut nonzero = 0;
    for d in 0..coeff.order() {
        let mask = unpenalized_mask(coeff.dims(), coeff.rank(), d);
        nonzero += coeff
            .factor(d)
            .iter()
            .zip(&mask)
            .filter(|(&b, &fixed)| !fixed && b != 0.0)
            .count();
    }
    nonzero + p0 + 1
}

fn finalize(
    dataset: &TensorGlmDataset,
    family: GlmFamily,
    config: &FitConfig,
    outcome: RunOutcome,
    best_restart: usize,
) -> Result<TensorGlmModel> {
    // Rescaling would change a penalty value, so penalized fits are only reordered.
    let (coeff, warning) = if config.active_penalty().is_some() {
        (order_components(&outcome.point.coeff), None)
    } else {
        normalize_with_fallback(&outcome.point.coeff)
    };
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let point = ParameterPoint {
        coeff,
        ..outcome.point
    };
    let eta = point.linear_predictors(dataset)?;
    let penalized = config.active_penalty().is_some();
    let df = if penalized {
        penalized_df(&point.coeff, dataset.p0())
    } else {
        effective_parameters(dataset.dims(), config.rank, dataset.p0())?
    };
    let phi = estimate_dispersion(family, dataset.y(), &eta, df);
    let loglik = log_likelihood(family, dataset.y(), &eta, phi)?;
    let n = dataset.n();
    Ok(TensorGlmModel {
        family,
        alpha: point.alpha,
        gamma: point.gamma,
        coeff: point.coeff,
        phi,
        loglik,
        objective: last(&outcome.trace),
        bic: -2.0 * loglik + (n as f64).ln() * df as f64,
        df,
        n,
        trace: outcome.trace,
        converged: outcome.converged,
        iterations: outcome.iterations,
        restarts_used: config.restarts,
        best_restart,
        penalty: config.penalty,
        warnings: warning.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_fixes_first_rows_except_last_mode() {
        let dims = [3, 2, 4];
        assert_eq!(unpenalized_mask(&dims, 2, 0), vec![true, false, false, true, false, false]);
        assert_eq!(unpenalized_mask(&dims, 1, 1), vec![true, false]);
        assert!(unpenalized_mask(&dims, 2, 2).iter().all(|&u| !u));
        assert!(unpenalized_mask(&[5], 2, 0).iter().all(|&u| !u));
    }

    #[test]
    fn random_start_has_unit_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_factors(&[4, 5, 3], 2, &mut rng);
        for f in c.factors() {
            for col in f.column_iter() {
                assert!((col.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::with_rank(0).validate().is_err());
        let c = FitConfig { epsilon: 0.0, ..FitConfig::default() };
        assert!(c.validate().is_err());
    }
}
