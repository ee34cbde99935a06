use crate::error::{domain, Result};
use crate::tensor::{mode_index_map, CpTensor, DenseTensor, Matrix};

/// Observations `(y_i, z_i, x_i)`, `i = 1..n`, with tensor covariates sharing
/// dims `(p_1, ..., p_D)` and an `n x p_0` matrix of ordinary covariates.
#[derive(Debug, Clone)]
pub struct TensorGlmDataset {
    y: Vec<f64>,
    z: Matrix,
    x: Vec<DenseTensor>,
    /// `[1 | Z]`, the design of the `(alpha, gamma)` block.
    covariate_design: Matrix,
}

impl TensorGlmDataset {
    pub fn new(y: Vec<f64>, z: Matrix, x: Vec<DenseTensor>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return domain("dataset needs at least one observation");
        }
        if z.nrows() != n || x.len() != n {
            return domain(format!(
                "{n} responses, {} covariate rows, {} tensors",
                z.nrows(),
                x.len()
            ));
        }
        let dims = x[0].dims();
        if let Some(i) = x.iter().position(|t| t.dims() != dims) {
            return domain(format!(
                "tensor {} has dims {:?}, tensor 1 has {:?}",
                i + 1,
                x[i].dims(),
                dims
            ));
        }
        let p0 = z.ncols();
        let covariate_design = Matrix::from_fn(n, p0 + 1, |i, j| if j == 0 { 1.0 } else { z[(i, j - 1)] });
        Ok(Self {
            y,
            z,
            x,
            covariate_design,
        })
    }

    /// A dataset without ordinary covariates (`p_0 = 0`).
    pub fn without_covariates(y: Vec<f64>, x: Vec<DenseTensor>) -> Result<Self> {
        let n = y.len();
        Self::new(y, Matrix::zeros(n, 0), x)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p0(&self) -> usize {
        self.z.ncols()
    }

    pub fn dims(&self) -> &[usize] {
        self.x[0].dims()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn x(&self) -> &[DenseTensor] {
        &self.x
    }

    pub(crate) fn covariate_design(&self) -> &Matrix {
        &self.covariate_design
    }

    /// Rows restricted to `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let y = idx.iter().map(|&i| self.y[i]).collect();
        let z = Matrix::from_fn(idx.len(), self.p0(), |r, c| self.z[(idx[r], c)]);
        let x = idx.iter().map(|&i| self.x[i].clone()).collect();
        Self::new(y, z, x)
    }
}

/// Precomputed pieces for the mode-d block design of one coefficient state.
pub(crate) struct BlockKernel {
    mode: usize,
    rows: usize,
    rank: usize,
    map: Vec<(usize, usize)>,
    chain: Matrix,
}

impl BlockKernel {
    pub(crate) fn new(coeff: &CpTensor, mode: usize) -> Result<Self> {
        if mode >= coeff.order() {
            return domain(format!("mode {mode} out of range for order {}", coeff.order()));
        }
        Ok(Self {
            mode,
            rows: coeff.dims()[mode],
            rank: coeff.rank(),
            map: mode_index_map(coeff.dims(), mode),
            chain: coeff.chain_without(&[mode])?,
        })
    }

    pub(crate) fn width(&self) -> usize {
        self.rows * self.rank
    }

    /// Writes `vec(X_(d) C)` into `out`, `C` the Khatri-Rao chain without mode d.
    pub(crate) fn row(&self, x: &DenseTensor, out: &mut [f64]) {
        out.fill(0.0);
        for (&v, &(i, col)) in x.as_slice().iter().zip(&self.map) {
            if v == 0.0 {
                continue;
            }
            for r in 0..self.rank {
                out[i + r * self.rows] += v * self.chain[(col, r)];
            }
        }
    }

    pub(crate) fn mode(&self) -> usize {
        self.mode
    }
}

/// The `n x (p_d R)` design of the mode-d block update: row `i` is
/// `vec(X_i(d) (B_D ⊙ ... ⊙ B_{d+1} ⊙ B_{d-1} ⊙ ... ⊙ B_1))`, so that
/// `<row_i, vec B_d> = <B, X_i>`.
pub fn build_block_design(dataset: &TensorGlmDataset, coeff: &CpTensor, mode: usize) -> Result<Matrix> {
    if dataset.dims() != coeff.dims() {
        return domain(format!(
            "coefficient dims {:?} do not match covariate dims {:?}",
            coeff.dims(),
            dataset.dims()
        ));
    }
    let kernel = BlockKernel::new(coeff, mode)?;
    let n = dataset.n();
    let width = kernel.width();
    let mut design = Matrix::zeros(n, width);
    let mut buf = vec![0.0; width];
    for (i, x) in dataset.x().iter().enumerate() {
        kernel.row(x, &mut buf);
        for (j, &v) in buf.iter().enumerate() {
            design[(i, j)] = v;
        }
    }
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{cp_to_full, inner};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(dims: &[usize], n: usize, rng: &mut ChaCha8Rng) -> TensorGlmDataset {
        let len: usize = dims.iter().product();
        let x = (0..n)
            .map(|_| DenseTensor::new(dims.to_vec(), (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        TensorGlmDataset::without_covariates(vec![0.0; n], x).unwrap()
    }

    fn random_cp(dims: &[usize], rank: usize, rng: &mut ChaCha8Rng) -> CpTensor {
        CpTensor::new(dims.iter().map(|&p| Matrix::from_fn(p, rank, |_, _| rng.gen_range(-1.0..1.0))).collect())
            .unwrap()
    }

    #[test]
    fn design_rows_reproduce_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for dims in [vec![3, 4], vec![3, 2, 4], vec![2, 3, 2, 2]] {
            let data = random_dataset(&dims, 6, &mut rng);
            let coeff = random_cp(&dims, 2, &mut rng);
            let full = cp_to_full(&coeff);
            for d in 0..dims.len() {
                let design = build_block_design(&data, &coeff, d).unwrap();
                let vec_bd = nalgebra::DVector::from_column_slice(coeff.factor(d).as_slice());
                let eta = &design * vec_bd;
                for (i, x) in data.x().iter().enumerate() {
                    let want = inner(&full, x).unwrap();
                    assert!((eta[i] - want).abs() < 1e-12 * (1.0 + want.abs()));
                }
            }
        }
    }

    #[test]
    fn two_way_rank_one_row_is_x_times_beta2() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let data = random_dataset(&[3, 4], 3, &mut rng);
        let coeff = random_cp(&[3, 4], 1, &mut rng);
        let design = build_block_design(&data, &coeff, 0).unwrap();
        for (i, x) in data.x().iter().enumerate() {
            let xb = x.to_matrix().unwrap() * coeff.factor(1);
            for a in 0..3 {
                assert!((design[(i, a)] - xb[(a, 0)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn all_ones_factors_give_mode_row_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let data = random_dataset(&[2, 3, 2], 2, &mut rng);
        let ones = CpTensor::new(vec![
            Matrix::from_element(2, 1, 1.0),
            Matrix::from_element(3, 1, 1.0),
            Matrix::from_element(2, 1, 1.0),
        ])
        .unwrap();
        let design = build_block_design(&data, &ones, 1).unwrap();
        for (i, x) in data.x().iter().enumerate() {
            for b in 0..3 {
                let mut s = 0.0;
                for a in 0..2 {
                    for c in 0..2 {
                        s += x.get(&[a, b, c]).unwrap();
                    }
                }
                assert!((design[(i, b)] - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dims_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let data = random_dataset(&[3, 4], 2, &mut rng);
        let coeff = random_cp(&[4, 3], 1, &mut rng);
        assert!(build_block_design(&data, &coeff, 0).is_err());
        let ok = random_cp(&[3, 4], 1, &mut rng);
        assert!(build_block_design(&data, &ok, 2).is_err());
    }

    #[test]
    fn dataset_validation() {
        let t = DenseTensor::zeros(vec![2, 2]).unwrap();
        let u = DenseTensor::zeros(vec![2, 3]).unwrap();
        assert!(TensorGlmDataset::without_covariates(vec![0.0, 1.0], vec![t.clone(), u]).is_err());
        assert!(TensorGlmDataset::without_covariates(vec![0.0], vec![t.clone(), t.clone()]).is_err());
        assert!(TensorGlmDataset::new(vec![0.0], Matrix::zeros(2, 1), vec![t]).is_err());
    }
}
