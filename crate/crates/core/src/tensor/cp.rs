use super::{khatri_rao_chain, DenseTensor, Matrix};
use crate::error::{domain, Result};

/// Rank-R CP (CANDECOMP/PARAFAC) representation `[[B_1, ..., B_D]]`, where
/// factor `d` is `p_d x R` and holds the vectors `beta_d^(r)` as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CpTensor {
    dims: Vec<usize>,
    rank: usize,
    factors: Vec<Matrix>,
}

impl CpTensor {
    pub fn new(factors: Vec<Matrix>) -> Result<Self> {
        let Some(first) = factors.first() else {
            return domain("CP tensor needs at least one factor");
        };
        let rank = first.ncols();
        if rank == 0 {
            return domain("CP rank must be at least 1");
        }
        for (d, f) in factors.iter().enumerate() {
            if f.ncols() != rank {
                return domain(format!(
                    "factor {} has {} columns, expected {rank}",
                    d + 1,
                    f.ncols()
                ));
            }
            if f.nrows() == 0 {
                return domain(format!("factor {} has no rows", d + 1));
            }
        }
        let dims = factors.iter().map(|f| f.nrows()).collect();
        Ok(Self {
            dims,
            rank,
            factors,
        })
    }

    pub fn zeros(dims: &[usize], rank: usize) -> Result<Self> {
        Self::new(dims.iter().map(|&p| Matrix::zeros(p, rank)).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn factor(&self, d: usize) -> &Matrix {
        &self.factors[d]
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    /// Replaces factor `d`; the shape must not change.
    pub fn set_factor(&mut self, d: usize, f: Matrix) -> Result<()> {
        if f.shape() != self.factors[d].shape() {
            return domain(format!(
                "factor {} must stay {:?}, got {:?}",
                d + 1,
                self.factors[d].shape(),
                f.shape()
            ));
        }
        self.factors[d] = f;
        Ok(())
    }

    pub fn into_factors(self) -> Vec<Matrix> {
        self.factors
    }

    /// Number of raw factor entries, `R * sum_d p_d`.
    pub fn num_entries(&self) -> usize {
        self.rank * self.dims.iter().sum::<usize>()
    }

    /// Khatri-Rao chain `B_D ⊙ ... ⊙ B_1` with the listed modes left out.
    pub fn chain_without(&self, skip: &[usize]) -> Result<Matrix> {
        let kept: Vec<&Matrix> = self
            .factors
            .iter()
            .enumerate()
            .filter(|(d, _)| !skip.contains(d))
            .map(|(_, f)| f)
            .collect();
        khatri_rao_chain(&kept, self.rank)
    }

    pub fn to_full(&self) -> DenseTensor {
        cp_to_full(self)
    }
}

/// Full tensor through `vec B = (B_D ⊙ ... ⊙ B_1) 1_R`.
pub fn cp_to_full(c: &CpTensor) -> DenseTensor {
    let chain = c
        .chain_without(&[])
        .expect("factor shapes are validated at construction");
    let data: Vec<f64> = chain.row_iter().map(|row| row.sum()).collect();
    DenseTensor::new(c.dims.clone(), data).expect("chain has prod(dims) rows")
}

/// Mode-d unfolding `B_(d) = B_d (B_D ⊙ ... ⊙ B_{d+1} ⊙ B_{d-1} ⊙ ... ⊙ B_1)^T`.
pub fn cp_mode_d_unfolding(c: &CpTensor, mode: usize) -> Result<Matrix> {
    if mode >= c.order() {
        return domain(format!("mode {mode} out of range for order {}", c.order()));
    }
    let chain = c.chain_without(&[mode])?;
    Ok(&c.factors[mode] * chain.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{mode_d_matricize, outer_product};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cp(dims: &[usize], rank: usize, seed: u64) -> CpTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CpTensor::new(
            dims.iter()
                .map(|&p| Matrix::from_fn(p, rank, |_, _| rng.gen_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    /// Sum of outer products, accumulated entry by entry.
    fn full_by_outer_products(c: &CpTensor) -> DenseTensor {
        let mut acc = DenseTensor::zeros(c.dims().to_vec()).unwrap();
        for r in 0..c.rank() {
            let cols: Vec<Vec<f64>> = c.factors().iter().map(|f| f.column(r).iter().copied().collect()).collect();
            let refs: Vec<&[f64]> = cols.iter().map(|v| v.as_slice()).collect();
            let term = outer_product(&refs).unwrap();
            for (a, t) in acc.as_mut_slice().iter_mut().zip(term.as_slice()) {
                *a += t;
            }
        }
        acc
    }

    #[test]
    fn rank_one_full() {
        let c = CpTensor::new(vec![
            Matrix::from_column_slice(2, 1, &[1.0, 2.0]),
            Matrix::from_column_slice(2, 1, &[1.0, 3.0]),
        ])
        .unwrap();
        assert_eq!(
            cp_to_full(&c).to_matrix().unwrap(),
            Matrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 6.0])
        );

        let padded = CpTensor::new(vec![
            Matrix::from_column_slice(2, 2, &[1.0, 2.0, 5.0, -1.0]),
            Matrix::from_column_slice(2, 2, &[1.0, 3.0, 0.0, 0.0]),
        ])
        .unwrap();
        assert_eq!(cp_to_full(&padded), cp_to_full(&c));
    }

    #[test]
    fn full_matches_outer_product_sum() {
        let c = random_cp(&[4, 3, 5], 3, 21);
        let a = cp_to_full(&c);
        let b = full_by_outer_products(&c);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn unfolding_matches_matricized_full() {
        let c = random_cp(&[3, 4, 2], 2, 22);
        let full = cp_to_full(&c);
        for d in 0..3 {
            let a = cp_mode_d_unfolding(&c, d).unwrap();
            let b = mode_d_matricize(&full, d).unwrap();
            assert!((a - b).abs().max() < 1e-12);
        }
    }

    #[test]
    fn two_way_unfoldings() {
        let c = random_cp(&[3, 4], 2, 23);
        let (b1, b2) = (c.factor(0).clone(), c.factor(1).clone());
        assert!((cp_mode_d_unfolding(&c, 0).unwrap() - &b1 * b2.transpose()).abs().max() < 1e-14);
        assert!((cp_mode_d_unfolding(&c, 1).unwrap() - &b2 * b1.transpose()).abs().max() < 1e-14);

        let r1 = random_cp(&[3, 4], 1, 24);
        let outer = r1.factor(0) * r1.factor(1).transpose();
        assert!((cp_mode_d_unfolding(&r1, 0).unwrap() - outer).abs().max() < 1e-14);
    }

    #[test]
    fn construction_validates_shapes() {
        assert!(CpTensor::new(vec![]).is_err());
        assert!(CpTensor::new(vec![Matrix::zeros(3, 2), Matrix::zeros(4, 1)]).is_err());
        assert!(CpTensor::new(vec![Matrix::zeros(3, 0)]).is_err());
        let mut c = CpTensor::zeros(&[3, 4], 2).unwrap();
        assert!(c.set_factor(0, Matrix::zeros(4, 2)).is_err());
        assert_eq!(c.num_entries(), 14);
    }
}
