//! Fixing the scaling and permutation indeterminacy of a CP factorization.
//!
//! Normal form: the first rows of `B_1, ..., B_{D-1}` are ones and the first
//! row of `B_D` is strictly decreasing across components.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::tensor::{CpTensor, Matrix};

/// Strict normalization. Fails on the measure-zero set where a first-row entry
/// of `B_1..B_{D-1}` is zero or the first row of `B_D` has ties.
pub fn normalize_identifiability(coeff: &CpTensor) -> Result<CpTensor> {
    let order = coeff.order();
    let rank = coeff.rank();
    let mut factors: Vec<Matrix> = coeff.factors().to_vec();
    for d in 0..order - 1 {
        for r in 0..rank {
            let s = factors[d][(0, r)];
            if s == 0.0 {
                return Err(Error::DegenerateNormalization(format!(
                    "first-row entry of factor {} component {} is zero",
                    d + 1,
                    r + 1
                )));
            }
            rescale(&mut factors, d, order - 1, r, s);
        }
    }
    let last = &factors[order - 1];
    let mut perm: Vec<usize> = (0..rank).collect();
    perm.sort_by(|&a, &b| last[(0, b)].total_cmp(&last[(0, a)]));
    if perm.windows(2).any(|w| last[(0, w[0])] == last[(0, w[1])]) {
        return Err(Error::DegenerateNormalization(
            "ties in the first row of the last factor".into(),
        ));
    }
    CpTensor::new(permute(&factors, &perm))
}

/// Normalization that always succeeds. Degenerate columns are scaled by their
/// largest-magnitude entry instead of the first row, and ties in the first row
/// of `B_D` are broken by later rows. Returns a warning when the fallback was used.
pub fn normalize_with_fallback(coeff: &CpTensor) -> (CpTensor, Option<String>) {
    match normalize_identifiability(coeff) {
        Ok(c) => (c, None),
        Err(e) => (fallback(coeff), Some(format!("{e}; used fallback normalization"))),
    }
}

fn fallback(coeff: &CpTensor) -> CpTensor {
    let order = coeff.order();
    let rank = coeff.rank();
    let mut factors: Vec<Matrix> = coeff.factors().to_vec();
    for d in 0..order - 1 {
        for r in 0..rank {
            let s = if factors[d][(0, r)] != 0.0 {
                factors[d][(0, r)]
            } else {
                let col = factors[d].column(r);
                let k = col.iamax();
                col[k]
            };
            if s != 0.0 {
                rescale(&mut factors, d, order - 1, r, s);
            }
        }
    }
    order_factors(&factors)
}

/// Sorts components by the rows of `B_D` (first row decreasing, ties broken by
/// later rows) without rescaling. Penalized fits use this because rescaling
/// would change the penalty.
pub fn order_components(coeff: &CpTensor) -> CpTensor {
    order_factors(coeff.factors())
}

fn order_factors(factors: &[Matrix]) -> CpTensor {
    let last = &factors[factors.len() - 1];
    let mut perm: Vec<usize> = (0..last.ncols()).collect();
    perm.sort_by(|&a, &b| {
        for i in 0..last.nrows() {
            match last[(i, b)].total_cmp(&last[(i, a)]) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        Ordering::Equal
    });
    CpTensor::new(permute(factors, &perm)).expect("shapes unchanged")
}

/// Divides column `r` of factor `d` by `s` and multiplies the same column of
/// factor `target` by `s`.
fn rescale(factors: &mut [Matrix], d: usize, target: usize, r: usize, s: f64) {
    factors[d].column_mut(r).unscale_mut(s);
    factors[target].column_mut(r).scale_mut(s);
}

fn permute(factors: &[Matrix], perm: &[usize]) -> Vec<Matrix> {
    factors
        .iter()
        .map(|f| Matrix::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, perm[j])]))
        .collect()
}
