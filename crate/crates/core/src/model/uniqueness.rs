//! Rank diagnostics for CP uniqueness: Kruskal-type k-rank sufficiency and
//! the Khatri-Rao chain rank necessary condition.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{CpTensor, Matrix};

/// Largest column count accepted by [`k_rank`].
pub const K_RANK_MAX_COLS: usize = 12;

/// Default relative tolerance for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Numerical rank: singular values above `rel_tol * s_max`.
pub fn matrix_rank(m: &Matrix, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Largest `k` such that every set of `k` columns is linearly independent,
/// by testing every column subset.
pub fn k_rank(m: &Matrix) -> Result<usize> {
    let cols = m.ncols();
    if cols > K_RANK_MAX_COLS {
        return Err(Error::Size(format!(
            "k-rank of a matrix with {cols} columns (limit {K_RANK_MAX_COLS})"
        )));
    }
    // Rank tolerance is anchored to the whole matrix so that a zero column
    // counts as dependent on its own.
    let scale = m.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if scale == 0.0 {
        return Ok(0);
    }
    for k in 1..=cols {
        for mask in 0u32..(1 << cols) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let idx: Vec<usize> = (0..cols).filter(|&j| mask & (1 << j) != 0).collect();
            let sub = m.select_columns(&idx);
            let sv = sub.singular_values();
            let tol = RANK_TOL * scale * (m.nrows().max(k) as f64);
            if sv.iter().filter(|&&s| s > tol).count() < k {
                return Ok(k - 1);
            }
        }
    }
    Ok(cols)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    /// `sum_d k_rank(B_d) >= 2R + D - 1`.
    pub sufficient: bool,
    /// Every Khatri-Rao chain omitting one factor has full column rank `R`.
    pub necessary: bool,
    pub k_ranks: Vec<usize>,
    pub chain_ranks: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn check_uniqueness(coeff: &CpTensor) -> Result<UniquenessReport> {
    let rank = coeff.rank();
    let order = coeff.order();
    let k_ranks = coeff.factors().iter().map(k_rank).collect::<Result<Vec<_>>>()?;
    let chain_ranks = (0..order)
        .map(|d| coeff.chain_without(&[d]).map(|c| matrix_rank(&c, RANK_TOL)))
        .collect::<Result<Vec<_>>>()?;
    let sufficient = k_ranks.iter().sum::<usize>() >= 2 * rank + order - 1;
    let necessary = chain_ranks.iter().min().copied() == Some(rank);
    let mut warnings = Vec::new();
    if order == 2 {
        warnings.push(
            "matrix coefficients are identified only up to a nonsingular transformation indeterminacy \
             (B_1 A, B_2 A^{-T}); the rank conditions do not remove it when R > 1"
                .to_string(),
        );
    }
    Ok(UniquenessReport {
        sufficient,
        necessary,
        k_ranks,
        chain_ranks,
        warnings,
    })
}
