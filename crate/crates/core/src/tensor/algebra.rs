use super::{DenseTensor, Matrix};
use crate::error::{domain, Result};

/// Kronecker product `a ⊗ b`, an `mp x nq` block matrix `[a_ij * b]`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let (m, n) = a.shape();
    let (p, q) = b.shape();
    let mut out = Matrix::zeros(m * p, n * q);
    for j in 0..n {
        for i in 0..m {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for l in 0..q {
                for k in 0..p {
                    out[(i * p + k, j * q + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Khatri-Rao (columnwise Kronecker) product: column `r` is `a_r ⊗ b_r`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return domain(format!(
            "Khatri-Rao product needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        ));
    }
    let (m, p) = (a.nrows(), b.nrows());
    let mut out = Matrix::zeros(m * p, a.ncols());
    for r in 0..a.ncols() {
        let mut col = out.column_mut(r);
        for i in 0..m {
            let ai = a[(i, r)];
            for k in 0..p {
                col[i * p + k] = ai * b[(k, r)];
            }
        }
    }
    Ok(out)
}

/// `factors[k-1] ⊙ ... ⊙ factors[0]`, i.e. `B_D ⊙ ... ⊙ B_1` when given
/// `[B_1, ..., B_D]`. An empty chain is the `1 x rank` row of ones, the
/// identity of the product.
pub fn khatri_rao_chain(factors: &[&Matrix], rank: usize) -> Result<Matrix> {
    let mut acc = Matrix::from_element(1, rank, 1.0);
    for f in factors {
        if f.ncols() != rank {
            return domain(format!(
                "factor has {} columns, expected rank {rank}",
                f.ncols()
            ));
        }
        acc = khatri_rao(f, &acc)?;
    }
    Ok(acc)
}

/// Outer product `b_1 ∘ ... ∘ b_D`.
pub fn outer_product(vectors: &[&[f64]]) -> Result<DenseTensor> {
    if vectors.is_empty() {
        return domain("outer product of zero vectors");
    }
    let dims: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    let mut data = vec![1.0];
    for v in vectors {
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &b in v.iter() {
            next.extend(data.iter().map(|&a| a * b));
        }
        data = next;
    }
    DenseTensor::new(dims, data)
}

/// `<a, b> = <vec a, vec b>`.
pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.dims() != b.dims() {
        return domain(format!(
            "inner product of tensors with dims {:?} and {:?}",
            a.dims(),
            b.dims()
        ));
    }
    Ok(dot(a.as_slice(), b.as_slice()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn kronecker_examples() {
        assert_eq!(
            kronecker(&Matrix::identity(2, 2), &Matrix::identity(2, 2)),
            Matrix::identity(4, 4)
        );
        let a = Matrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let b = Matrix::from_column_slice(2, 1, &[1.0, 3.0]);
        assert_eq!(kronecker(&a, &b).as_slice(), &[1.0, 3.0, 2.0, 6.0]);
    }

    #[test]
    fn kronecker_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(2, 3, &mut rng);
        let b = random_matrix(3, 2, &mut rng);
        let k = kronecker(&a, &b);
        assert_eq!(k.shape(), (6, 6));
        for i in 0..2 {
            for j in 0..3 {
                for r in 0..3 {
                    for s in 0..2 {
                        assert_eq!(k[(3 * i + r, 2 * j + s)], a[(i, j)] * b[(r, s)]);
                    }
                }
            }
        }
    }

    #[test]
    fn khatri_rao_examples() {
        let a = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = Matrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(khatri_rao(&a, &b).unwrap().as_slice(), &[0.0, 1.0, 0.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = random_matrix(4, 1, &mut rng);
        let v = random_matrix(3, 1, &mut rng);
        assert_eq!(khatri_rao(&u, &v).unwrap(), kronecker(&u, &v));

        let wide = random_matrix(2, 3, &mut rng);
        assert!(khatri_rao(&u, &wide).is_err());
    }

    #[test]
    fn khatri_rao_matches_columnwise_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_matrix(3, 2, &mut rng);
        let b = random_matrix(2, 2, &mut rng);
        let kr = khatri_rao(&a, &b).unwrap();
        assert_eq!(kr.shape(), (6, 2));
        for r in 0..2 {
            let ar = Matrix::from_iterator(3, 1, a.column(r).iter().copied());
            let br = Matrix::from_iterator(2, 1, b.column(r).iter().copied());
            let expect = kronecker(&ar, &br);
            assert_eq!(kr.column(r).as_slice(), expect.as_slice());
        }
    }

    #[test]
    fn outer_product_examples() {
        let t = outer_product(&[&[1.0, 2.0], &[1.0, 3.0]]).unwrap();
        assert_eq!(t.to_matrix().unwrap(), Matrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 6.0]));

        let z = outer_product(&[&[1.5, -2.0, 3.0], &[0.0, 0.0]]).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));

        let (a, b, c) = ([1.0, 2.0], [1.0, 1.0], [2.0, 0.0]);
        let t = outer_product(&[&a, &b, &c]).unwrap();
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                for (k, ck) in c.iter().enumerate() {
                    assert_eq!(t.get(&[i, j, k]).unwrap(), ai * bj * ck);
                }
            }
        }
    }

    #[test]
    fn inner_examples() {
        let eye = DenseTensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = DenseTensor::from_matrix(&Matrix::from_row_slice(2, 2, &[2.0, 5.0, 7.0, 3.0])).unwrap();
        assert_eq!(inner(&eye, &m).unwrap(), 5.0);
        assert_eq!(inner(&m, &DenseTensor::zeros(vec![2, 2]).unwrap()).unwrap(), 0.0);
        assert!(inner(&m, &DenseTensor::zeros(vec![4]).unwrap()).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut expect = 0.0;
        for i in 0..24 {
            expect += a[i] * b[i];
        }
        let ta = DenseTensor::new(vec![2, 3, 4], a).unwrap();
        let tb = DenseTensor::new(vec![2, 3, 4], b).unwrap();
        assert!((inner(&ta, &tb).unwrap() - expect).abs() < 1e-12);
    }
}
