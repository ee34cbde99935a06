//! Dense tensors in vec order and the matrix/tensor algebra the regression is built on.
//!
//! Storage follows the vec operator: the first index varies fastest, so a 2-way
//! tensor shares its layout with a column-major matrix. All indices in this
//! module are zero-based.

mod algebra;
mod cp;
pub mod io;

pub use algebra::{inner, khatri_rao, khatri_rao_chain, kronecker, outer_product};
pub(crate) use algebra::dot as algebra_dot;
pub use cp::{cp_mode_d_unfolding, cp_to_full, CpTensor};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Column-major dense matrix.
pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return domain(format!(
                "tensor with dims {dims:?} needs {len} entries, got {}",
                data.len()
            ));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        let len = dims.iter().product();
        Ok(Self {
            dims,
            data: vec![0.0; len],
        })
    }

    /// Views a matrix as a 2-way tensor.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        Self::new(vec![m.nrows(), m.ncols()], m.as_slice().to_vec())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `vec` of the tensor.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[vec_index(&self.dims, index)?])
    }

    /// Interprets a 2-way tensor as a matrix.
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.order() != 2 {
            return domain(format!("expected a 2-way tensor, got order {}", self.order()));
        }
        Ok(Matrix::from_column_slice(
            self.dims[0],
            self.dims[1],
            &self.data,
        ))
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return domain("tensor must have at least one mode");
    }
    if let Some(d) = dims.iter().position(|&p| p == 0) {
        return domain(format!("mode {} has zero length", d + 1));
    }
    Ok(())
}

/// Flat vec-order offset of a multi-index: `sum_d i_d * prod_{d' < d} p_{d'}`.
pub fn vec_index(dims: &[usize], index: &[usize]) -> Result<usize> {
    if index.len() != dims.len() {
        return domain(format!(
            "index has {} components for a {}-way tensor",
            index.len(),
            dims.len()
        ));
    }
    let mut offset = 0;
    let mut stride = 1;
    for (d, (&i, &p)) in index.iter().zip(dims).enumerate() {
        if i >= p {
            return domain(format!("index {i} out of range for mode {} of size {p}", d + 1));
        }
        offset += i * stride;
        stride *= p;
    }
    Ok(offset)
}

/// Inverse of [`vec_index`], writing into `index`.
pub(crate) fn unravel(dims: &[usize], mut offset: usize, index: &mut [usize]) {
    for (slot, &p) in index.iter_mut().zip(dims) {
        *slot = offset % p;
        offset /= p;
    }
}

/// For every flat offset of a tensor with `dims`, the (row, column) it occupies
/// in the mode-`mode` matricization. This is the index-map form of the
/// permutation between `vec B` and `vec B_(d)`.
pub(crate) fn mode_index_map(dims: &[usize], mode: usize) -> Vec<(usize, usize)> {
    let total: usize = dims.iter().product();
    let mut strides = vec![0usize; dims.len()];
    let mut s = 1;
    for (d, &p) in dims.iter().enumerate() {
        if d != mode {
            strides[d] = s;
            s *= p;
        }
    }
    let mut index = vec![0usize; dims.len()];
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        unravel(dims, flat, &mut index);
        let col = index
            .iter()
            .zip(&strides)
            .enumerate()
            .filter(|(d, _)| *d != mode)
            .map(|(_, (i, s))| i * s)
            .sum();
        out.push((index[mode], col));
    }
    out
}

/// Mode-d matricization: a `p_d x prod_{d' != d} p_{d'}` matrix.
pub fn mode_d_matricize(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    let dims = t.dims();
    if mode >= dims.len() {
        return domain(format!("mode {mode} out of range for a {}-way tensor", dims.len()));
    }
    let rows = dims[mode];
    let cols = t.len() / rows;
    let mut m = Matrix::zeros(rows, cols);
    for (&v, (r, c)) in t.as_slice().iter().zip(mode_index_map(dims, mode)) {
        m[(r, c)] = v;
    }
    Ok(m)
}

/// Mode-(d,d') matricization: rows enumerate `(i_d, i_{d'})` with `i_d`
/// fastest, columns enumerate the remaining modes in vec order.
pub fn mode_dd_matricize(t: &DenseTensor, d1: usize, d2: usize) -> Result<Matrix> {
    let dims = t.dims();
    let order = dims.len();
    if d1 >= order || d2 >= order {
        return domain(format!("modes ({d1}, {d2}) out of range for a {order}-way tensor"));
    }
    if d1 == d2 {
        return domain("mode-(d,d') matricization needs two distinct modes");
    }
    let rows = dims[d1] * dims[d2];
    let cols = t.len() / rows;
    let mut strides = vec![0usize; order];
    let mut s = 1;
    for (d, &p) in dims.iter().enumerate() {
        if d != d1 && d != d2 {
            strides[d] = s;
            s *= p;
        }
    }
    let mut m = Matrix::zeros(rows, cols);
    let mut index = vec![0usize; order];
    for (flat, &v) in t.as_slice().iter().enumerate() {
        unravel(dims, flat, &mut index);
        let row = index[d1] + index[d2] * dims[d1];
        let col: usize = index.iter().zip(&strides).map(|(i, s)| i * s).sum();
        m[(row, col)] = v;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = dims.iter().product();
        let data = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseTensor::new(dims.to_vec(), data).unwrap()
    }

    #[test]
    fn vec_index_examples() {
        assert_eq!(vec_index(&[2, 3], &[1, 2]).unwrap(), 5);
        assert_eq!(vec_index(&[2, 2, 2], &[0, 0, 0]).unwrap(), 0);
        assert_eq!(vec_index(&[3, 4, 5], &[1, 2, 3]).unwrap(), 43);
        assert!(vec_index(&[3, 4], &[3, 0]).is_err());
        assert!(vec_index(&[3, 4], &[0]).is_err());
    }

    #[test]
    fn vec_index_is_a_bijection() {
        let dims = [4, 3, 2, 2];
        let total: usize = dims.iter().product();
        let mut seen = vec![false; total];
        for a in 0..4 {
            for b in 0..3 {
                for c in 0..2 {
                    for d in 0..2 {
                        let j = vec_index(&dims, &[a, b, c, d]).unwrap();
                        assert!(!seen[j]);
                        seen[j] = true;
                        let mut back = [0; 4];
                        unravel(&dims, j, &mut back);
                        assert_eq!(back, [a, b, c, d]);
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn rejects_empty_modes() {
        assert!(DenseTensor::zeros(vec![3, 0, 2]).is_err());
        assert!(DenseTensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn mode_one_unfolding_stacks_to_vec() {
        let t = random_tensor(&[3, 4, 2], 1);
        let m = mode_d_matricize(&t, 0).unwrap();
        assert_eq!(m.as_slice(), t.as_slice());
    }

    #[test]
    fn matrix_mode_one_is_identity() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = DenseTensor::from_matrix(&m).unwrap();
        assert_eq!(mode_d_matricize(&t, 0).unwrap(), m);
        assert_eq!(mode_d_matricize(&t, 1).unwrap(), m.transpose());
    }

    #[test]
    fn mode_two_matches_loop_oracle() {
        let t = random_tensor(&[3, 4, 2], 2);
        let m = mode_d_matricize(&t, 1).unwrap();
        assert_eq!(m.shape(), (4, 6));
        for i1 in 0..3 {
            for i2 in 0..4 {
                for i3 in 0..2 {
                    let col = i1 + i3 * 3;
                    assert_eq!(m[(i2, col)], t.get(&[i1, i2, i3]).unwrap());
                }
            }
        }
        assert!(mode_d_matricize(&t, 3).is_err());
    }

    #[test]
    fn mode_dd_slices() {
        let t = random_tensor(&[2, 3, 4], 3);
        let m = mode_dd_matricize(&t, 0, 1).unwrap();
        assert_eq!(m.shape(), (6, 4));
        for k in 0..4 {
            let col: Vec<f64> = m.column(k).iter().copied().collect();
            assert_eq!(col, t.as_slice()[k * 6..(k + 1) * 6].to_vec());
        }

        let mat = random_tensor(&[3, 2], 4);
        let v = mode_dd_matricize(&mat, 0, 1).unwrap();
        assert_eq!(v.shape(), (6, 1));
        assert_eq!(v.as_slice(), mat.as_slice());
        assert!(mode_dd_matricize(&mat, 1, 1).is_err());
    }

    #[test]
    fn mode_dd_matches_loop_oracle() {
        let dims = [2, 3, 4, 2];
        let t = random_tensor(&dims, 5);
        let m = mode_dd_matricize(&t, 1, 3).unwrap();
        assert_eq!(m.shape(), (6, 8));
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    for d in 0..2 {
                        let row = b + d * 3;
                        let col = a + c * 2;
                        assert_eq!(m[(row, col)], t.get(&[a, b, c, d]).unwrap());
                    }
                }
            }
        }
    }
}
