use nalgebra::{DMatrix, DVector};

use super::family::{log_likelihood, GlmFamily, MIN_VARIANCE};
use crate::error::{Error, Result};
use crate::regularization::{penalty_derivatives, penalty_value, threshold_update, PenaltySpec};
use crate::tensor::Matrix;

/// Reciprocal condition bound below which Jacobi-scaled normal equations
/// count as singular.
const RCOND_FLOOR: f64 = 1e-13;
const MAX_STEP_HALVINGS: usize = 40;
/// Relative log-likelihood loss attributed to floating-point rounding.
const ROUNDING: f64 = 1e-13;
/// Largest coefficient move (relative) still counted as converged.
const STEP_TOL: f64 = 1e-10;
/// Consecutive flat-likelihood iterations tolerated before stopping anyway.
const MAX_FLAT_STEPS: usize = 3;
/// Coordinate sweeps between Newton polishing steps.
const POLISH_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coefficients: DVector<f64>,
    /// Unpenalized log-likelihood at `coefficients`.
    pub loglik: f64,
    /// Penalized objective `loglik - sum_j P(|beta_j|)`; equals `loglik` without a penalty.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every iteration, starting with the initial point.
    pub trace: Vec<f64>,
    /// Which start won for nonconvex penalties: 0 warm start, 1 zero, 2 unpenalized fit.
    pub selected_start: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative change in the objective that ends the outer iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Dispersion used in the likelihood; the solution itself does not depend on it.
    pub phi: f64,
    /// Starts tried for nonconvex penalties.
    pub nonconvex_restarts: usize,
    /// Coordinate descent stops when no coordinate moves more than this (scaled).
    pub cd_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100,
            phi: 1.0,
            nonconvex_restarts: 3,
            cd_tol: 1e-13,
            max_sweeps: 20_000,
        }
    }
}

/// One GLM regression `g(mu) = offset + X beta`.
#[derive(Debug, Clone, Copy)]
pub struct GlmProblem<'a> {
    pub design: &'a Matrix,
    pub y: &'a [f64],
    pub family: GlmFamily,
    pub offset: &'a [f64],
}

impl<'a> GlmProblem<'a> {
    pub fn new(design: &'a Matrix, y: &'a [f64], family: GlmFamily, offset: &'a [f64]) -> Result<Self> {
        if design.nrows() != y.len() || offset.len() != y.len() {
            return Err(Error::Domain(format!(
                "design has {} rows, {} responses, {} offsets",
                design.nrows(),
                y.len(),
                offset.len()
            )));
        }
        Ok(Self {
            design,
            y,
            family,
            offset,
        })
    }

    pub fn ncols(&self) -> usize {
        self.design.ncols()
    }

    pub fn eta(&self, beta: &DVector<f64>) -> Vec<f64> {
        let xb = self.design * beta;
        xb.iter().zip(self.offset).map(|(a, b)| a + b).collect()
    }

    pub fn loglik(&self, beta: &DVector<f64>, phi: f64) -> Result<f64> {
        log_likelihood(self.family, self.y, &self.eta(beta), phi)
    }

    pub fn penalized_objective(
        &self,
        beta: &DVector<f64>,
        phi: f64,
        penalty: &PenaltySpec,
        unpenalized: &[bool],
    ) -> Result<f64> {
        Ok(self.loglik(beta, phi)? - penalty_sum(beta, penalty, unpenalized))
    }

    /// Gradient of the log-likelihood in `beta`: `X^T (y - mu) / phi`.
    pub fn gradient(&self, beta: &DVector<f64>, phi: f64) -> DVector<f64> {
        let eta = self.eta(beta);
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter()
                .zip(self.y)
                .map(|(&e, &y)| (y - self.family.mean(e)) / phi),
        );
        self.design.tr_mul(&resid)
    }

    /// Working weights `V(mu) / phi` and working response `eta - offset + (y - mu) / V(mu)`.
    fn working(&self, beta: &DVector<f64>, phi: f64) -> (Vec<f64>, DVector<f64>) {
        let eta = self.eta(beta);
        let n = eta.len();
        let mut w = Vec::with_capacity(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let mu = self.family.mean(eta[i]);
            let v = self.family.variance(mu).max(MIN_VARIANCE);
            w.push(v / phi);
            z[i] = eta[i] - self.offset[i] + (self.y[i] - mu) / v;
        }
        (w, z)
    }

    /// Maximum likelihood by iteratively reweighted least squares with step
    /// halving, so the log-likelihood never decreases between iterates beyond
    /// summation rounding.
    pub fn irls(&self, start: Option<&DVector<f64>>, opts: &SolverOptions) -> Result<GlmFit> {
        let p = self.ncols();
        let mut beta = start.cloned().unwrap_or_else(|| DVector::zeros(p));
        let mut ll = self.loglik(&beta, opts.phi);
        if !matches!(ll, Ok(v) if v.is_finite()) {
            beta = DVector::zeros(p);
            ll = self.loglik(&beta, opts.phi);
        }
        let mut ll = ll?;
        let mut trace = vec![ll];
        let mut flat = 0;
        for iter in 1..=opts.max_iter {
            let (w, z) = self.working(&beta, opts.phi);
            let mut candidate = weighted_least_squares(self.design, &w, &z)?;
            let mut cand_ll = self.loglik(&candidate, opts.phi).unwrap_or(f64::NEG_INFINITY);
            // A full Newton step that loses only rounding noise is taken as is;
            // near the optimum the summed likelihood cannot resolve the gain.
            let floor = ll - ROUNDING * ll.abs().max(1.0);
            let mut halvings = 0;
            while !(cand_ll >= floor) && halvings < MAX_STEP_HALVINGS {
                candidate = (&candidate + &beta) * 0.5;
                cand_ll = self.loglik(&candidate, opts.phi).unwrap_or(f64::NEG_INFINITY);
                halvings += 1;
            }
            if !(cand_ll >= floor) {
                // No ascent direction left at working precision.
                return Ok(GlmFit::unpenalized(beta, ll, iter, true, trace));
            }
            let change = cand_ll - ll;
            let step = (&candidate - &beta).amax();
            beta = candidate;
            ll = cand_ll;
            trace.push(ll);
            // The likelihood is flat near the optimum, so also require a small
            // step, unless the steps keep wandering on a flat ridge.
            if change <= opts.tol * ll.abs().max(f64::MIN_POSITIVE) {
                flat += 1;
                if step <= STEP_TOL * (1.0 + beta.amax()) || flat >= MAX_FLAT_STEPS {
                    return Ok(GlmFit::unpenalized(beta, ll, iter, true, trace));
                }
            } else {
                flat = 0;
            }
        }
        Err(Error::MaxIterations {
            iterations: opts.max_iter,
            last: beta.iter().copied().collect(),
        })
    }

    /// Maximizes `loglik - sum_j P(|beta_j|)` over the coordinates not flagged
    /// in `unpenalized`, by cyclic coordinate descent on the IRLS quadratic
    /// approximation. Nonconvex penalties try several starts and keep the best.
    pub fn penalized(
        &self,
        penalty: &PenaltySpec,
        unpenalized: &[bool],
        start: Option<&DVector<f64>>,
        opts: &SolverOptions,
    ) -> Result<GlmFit> {
        let p = self.ncols();
        if unpenalized.len() != p {
            return Err(Error::Domain(format!(
                "penalty mask has {} entries for {p} coefficients",
                unpenalized.len()
            )));
        }
        if !penalty.is_active() || unpenalized.iter().all(|&u| u) {
            return self.irls(start, opts);
        }
        let warm = start.cloned().unwrap_or_else(|| DVector::zeros(p));
        if penalty.is_convex() {
            return self.coordinate_descent(penalty, unpenalized, warm, opts);
        }

        let mut starts = vec![warm];
        if opts.nonconvex_restarts >= 2 {
            starts.push(DVector::zeros(p));
        }
        if opts.nonconvex_restarts >= 3 {
            if let Ok(fit) = self.irls(None, opts) {
                starts.push(fit.coefficients);
            }
        }
        let mut best: Option<GlmFit> = None;
        let mut last_err = None;
        for (k, s) in starts.into_iter().enumerate() {
            match self.coordinate_descent(penalty, unpenalized, s, opts) {
                Ok(mut fit) => {
                    fit.selected_start = Some(k);
                    if best.as_ref().is_none_or(|b| fit.objective > b.objective) {
                        best = Some(fit);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        best.ok_or_else(|| last_err.expect("at least one start"))
    }

    fn coordinate_descent(
        &self,
        penalty: &PenaltySpec,
        unpenalized: &[bool],
        start: DVector<f64>,
        opts: &SolverOptions,
    ) -> Result<GlmFit> {
        let objective = |b: &DVector<f64>| {
            self.penalized_objective(b, opts.phi, penalty, unpenalized)
                .unwrap_or(f64::NEG_INFINITY)
        };
        let mut beta = start;
        let mut obj = objective(&beta);
        if !obj.is_finite() {
            beta = DVector::zeros(self.ncols());
            obj = objective(&beta);
        }
        let mut trace = vec![obj];
        for iter in 1..=opts.max_iter {
            let (w, z) = self.working(&beta, opts.phi);
            let mut candidate =
                cd_weighted(self.design, &w, &z, &beta, penalty, unpenalized, opts);
            let mut cand_obj = objective(&candidate);
            let mut halvings = 0;
            while !(cand_obj >= obj) && halvings < MAX_STEP_HALVINGS {
                candidate = (&candidate + &beta) * 0.5;
                cand_obj = objective(&candidate);
                halvings += 1;
            }
            if !(cand_obj >= obj) {
                return self.finish_penalized(beta, obj, iter, true, trace, opts);
            }
            let change = cand_obj - obj;
            beta = candidate;
            obj = cand_obj;
            trace.push(obj);
            if change <= opts.tol * obj.abs().max(f64::MIN_POSITIVE) {
                return self.finish_penalized(beta, obj, iter, true, trace, opts);
            }
        }
        Err(Error::MaxIterations {
            iterations: opts.max_iter,
            last: beta.iter().copied().collect(),
        })
    }

    fn finish_penalized(
        &self,
        beta: DVector<f64>,
        objective: f64,
        iterations: usize,
        converged: bool,
        trace: Vec<f64>,
        opts: &SolverOptions,
    ) -> Result<GlmFit> {
        let loglik = self.loglik(&beta, opts.phi)?;
        Ok(GlmFit {
            coefficients: beta,
            loglik,
            objective,
            iterations,
            converged,
            trace,
            selected_start: None,
        })
    }
}

impl GlmFit {
    fn unpenalized(
        coefficients: DVector<f64>,
        loglik: f64,
        iterations: usize,
        converged: bool,
        trace: Vec<f64>,
    ) -> Self {
        Self {
            coefficients,
            loglik,
            objective: loglik,
            iterations,
            converged,
            trace,
            selected_start: None,
        }
    }
}

pub(crate) fn penalty_sum(beta: &DVector<f64>, penalty: &PenaltySpec, unpenalized: &[bool]) -> f64 {
    if !penalty.is_active() {
        return 0.0;
    }
    beta.iter()
        .zip(unpenalized)
        .filter(|(_, &u)| !u)
        .map(|(&b, _)| penalty_value(penalty, b))
        .sum()
}

/// Solves `min sum_i w_i (z_i - x_i^T beta)^2` through Jacobi-scaled Cholesky.
pub(crate) fn weighted_least_squares(x: &Matrix, w: &[f64], z: &DVector<f64>) -> Result<DVector<f64>> {
    let mut wx = x.clone();
    for mut col in wx.column_iter_mut() {
        for (v, wi) in col.iter_mut().zip(w) {
            *v *= wi;
        }
    }
    let gram = x.tr_mul(&wx);
    let rhs = wx.tr_mul(z);
    solve_normal_equations(gram, rhs)
}

pub(crate) fn solve_normal_equations(gram: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let p = gram.ncols();
    let scale: Vec<f64> = (0..p).map(|j| gram[(j, j)]).collect();
    if scale.iter().any(|&s| !(s > 0.0)) {
        return Err(singular(&gram));
    }
    let inv_sqrt: Vec<f64> = scale.iter().map(|s| 1.0 / s.sqrt()).collect();
    let scaled = DMatrix::from_fn(p, p, |i, j| gram[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let Some(chol) = scaled.clone().cholesky() else {
        return Err(singular(&gram));
    };
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for j in 0..p {
        lo = lo.min(l[(j, j)]);
        hi = hi.max(l[(j, j)]);
    }
    if (lo / hi).powi(2) < RCOND_FLOOR {
        return Err(singular(&gram));
    }
    let scaled_rhs = DVector::from_fn(p, |i, _| rhs[i] * inv_sqrt[i]);
    let sol = chol.solve(&scaled_rhs);
    Ok(DVector::from_fn(p, |i, _| sol[i] * inv_sqrt[i]))
}

fn singular(gram: &DMatrix<f64>) -> Error {
    let sv = gram.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > max * RCOND_FLOOR).count();
    Error::Singular {
        block: None,
        columns: gram.ncols(),
        rank,
    }
}

/// Cyclic coordinate descent on `min sum_i w_i (z_i - x_i^T beta)^2 / 2 + penalty`,
/// working on the Gram matrix `X^T W X` so each coordinate step costs `O(p)`.
fn cd_weighted(
    x: &Matrix,
    w: &[f64],
    z: &DVector<f64>,
    start: &DVector<f64>,
    penalty: &PenaltySpec,
    unpenalized: &[bool],
    opts: &SolverOptions,
) -> DVector<f64> {
    let p = x.ncols();
    let mut wx = x.clone();
    for mut col in wx.column_iter_mut() {
        for (v, wi) in col.iter_mut().zip(w) {
            *v *= wi;
        }
    }
    let gram = x.tr_mul(&wx);
    let wz = wx.tr_mul(z);
    let mut beta = start.clone();
    // grad = X^T W (z - X beta), kept current as coordinates move.
    let mut grad = &wz - &gram * &beta;
    let zwz: f64 = z.iter().zip(w).map(|(v, wi)| wi * v * v).sum();
    let scale = 1.0 + zwz.sqrt();
    for sweep in 0..opts.max_sweeps {
        let mut max_move = 0.0f64;
        for j in 0..p {
            let a = gram[(j, j)];
            let old = beta[j];
            let new = if a <= 0.0 {
                0.0
            } else {
                let target = old + grad[j] / a;
                if unpenalized[j] {
                    target
                } else {
                    threshold_update(penalty, target, a)
                }
            };
            let delta = new - old;
            if delta != 0.0 {
                grad.axpy(-delta, &gram.column(j), 1.0);
                beta[j] = new;
                max_move = max_move.max(delta.abs() * a.sqrt());
            }
        }
        if max_move <= opts.cd_tol * scale {
            break;
        }
        // Plain sweeps crawl along correlated directions; a Newton step on the
        // current support usually lands on the solution outright.
        if sweep % POLISH_EVERY == POLISH_EVERY - 1 && polish(&gram, &wz, &mut beta, penalty, unpenalized) {
            grad = &wz - &gram * &beta;
        }
    }
    beta
}

/// `beta^T G beta / 2 - c^T beta + sum_{j penalized} P(|beta_j|)`.
fn quadratic_objective(gram: &Matrix, c: &DVector<f64>, beta: &DVector<f64>, penalty: &PenaltySpec, unpenalized: &[bool]) -> f64 {
    0.5 * beta.dot(&(gram * beta)) - c.dot(beta) + penalty_sum(beta, penalty, unpenalized)
}

/// One Newton step for the coordinate-descent subproblem restricted to the
/// coordinates that are unpenalized or nonzero, where the penalty is smooth.
/// The step is cut where a coordinate would cross zero. Returns whether it
/// lowered the subproblem objective; `beta` is left unchanged otherwise.
fn polish(gram: &Matrix, c: &DVector<f64>, beta: &mut DVector<f64>, penalty: &PenaltySpec, unpenalized: &[bool]) -> bool {
    let active: Vec<usize> = (0..beta.len())
        .filter(|&j| gram[(j, j)] > 0.0 && (unpenalized[j] || beta[j] != 0.0))
        .collect();
    let k = active.len();
    if k == 0 {
        return false;
    }
    let full_grad = gram * &*beta - c;
    let mut hess = Matrix::from_fn(k, k, |a, b| gram[(active[a], active[b])]);
    let mut g = DVector::from_fn(k, |a, _| full_grad[active[a]]);
    for (a, &j) in active.iter().enumerate() {
        if !unpenalized[j] {
            let (d1, d2) = penalty_derivatives(penalty, beta[j].abs());
            g[a] += beta[j].signum() * d1;
            hess[(a, a)] += d2;
        }
    }
    let Some(chol) = hess.cholesky() else {
        return false;
    };
    let step = -chol.solve(&g);
    let mut t = 1.0f64;
    for (a, &j) in active.iter().enumerate() {
        if !unpenalized[j] && step[a] * beta[j] < 0.0 {
            t = t.min(-beta[j] / step[a]);
        }
    }
    let before = quadratic_objective(gram, c, beta, penalty, unpenalized);
    let mut candidate = beta.clone();
    for (a, &j) in active.iter().enumerate() {
        let v = beta[j] + t * step[a];
        // A coordinate that reaches the cut lands on zero exactly.
        candidate[j] = if !unpenalized[j] && v * beta[j] <= 0.0 { 0.0 } else { v };
    }
    if quadratic_objective(gram, c, &candidate, penalty, unpenalized) < before {
        *beta = candidate;
        true
    } else {
        false
    }
}

/// Unpenalized maximum likelihood with default options.
pub fn irls_fit(design: &Matrix, y: &[f64], family: GlmFamily, offset: &[f64]) -> Result<GlmFit> {
    GlmProblem::new(design, y, family, offset)?.irls(None, &SolverOptions::default())
}

/// Penalized maximum likelihood with default options; `unpenalized_mask[j]`
/// exempts coefficient `j` from the penalty.
pub fn penalized_fit(
    design: &Matrix,
    y: &[f64],
    family: GlmFamily,
    offset: &[f64],
    penalty: &PenaltySpec,
    unpenalized_mask: &[bool],
) -> Result<GlmFit> {
    GlmProblem::new(design, y, family, offset)?.penalized(
        penalty,
        unpenalized_mask,
        None,
        &SolverOptions::default(),
    )
}
