//! Derivatives of the linear predictor and the log-likelihood with respect to
//! the CP factors, plus score, information and Wald standard errors.
//!
//! Factor parameters are laid out block by block, `vec B_1, ..., vec B_D`.
//! Inference uses the free parametrization: the first rows of
//! `B_1..B_{D-1}` are fixed by normalization and dropped, and `alpha`,
//! `gamma` are appended.

use nalgebra::DVector;
use serde::Serialize;

use super::dataset::{BlockKernel, TensorGlmDataset};
use super::fit::unpenalized_mask;
use super::TensorGlmModel;
use crate::error::{domain, Error, Result};
use crate::glm::log_likelihood;
use crate::tensor::{mode_dd_matricize, CpTensor, DenseTensor, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ParamKey {
    Factor { mode: usize, row: usize, col: usize },
    Intercept,
    Covariate(usize),
}

#[derive(Debug, Clone)]
pub struct InferenceReport {
    pub score: DVector<f64>,
    pub information: Matrix,
    pub std_errors: DVector<f64>,
    pub free_parameters: Vec<ParamKey>,
}

impl InferenceReport {
    pub fn position(&self, key: ParamKey) -> Option<usize> {
        self.free_parameters.iter().position(|&k| k == key)
    }

    pub fn std_error(&self, key: ParamKey) -> Option<f64> {
        self.position(key).map(|j| self.std_errors[j])
    }
}

fn block_offsets(coeff: &CpTensor) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(coeff.order());
    let mut acc = 0;
    for &p in coeff.dims() {
        offsets.push(acc);
        acc += p * coeff.rank();
    }
    offsets
}

fn check_dims(coeff: &CpTensor, x: &DenseTensor) -> Result<()> {
    if coeff.dims() != x.dims() {
        return domain(format!(
            "coefficient dims {:?} do not match covariate dims {:?}",
            coeff.dims(),
            x.dims()
        ));
    }
    Ok(())
}

/// Gradient of `eta = <[[B_1, ..., B_D]], X>` with respect to
/// `(vec B_1, ..., vec B_D)`. Block d is `vec(X_(d) C_{-d})` with `C_{-d}`
/// the Khatri-Rao chain without mode d.
pub fn eta_gradient(coeff: &CpTensor, x: &DenseTensor) -> Result<DVector<f64>> {
    check_dims(coeff, x)?;
    let kernels = (0..coeff.order())
        .map(|d| BlockKernel::new(coeff, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(gradient_with(&kernels, coeff, x))
}

fn gradient_with(kernels: &[BlockKernel], coeff: &CpTensor, x: &DenseTensor) -> DVector<f64> {
    let offsets = block_offsets(coeff);
    let mut g = DVector::zeros(coeff.num_entries());
    for k in kernels {
        let d = k.mode();
        let start = offsets[d];
        k.row(x, &mut g.as_mut_slice()[start..start + k.width()]);
    }
    g
}

/// Hessian of `eta` with respect to `(vec B_1, ..., vec B_D)`. Diagonal blocks
/// vanish; block `(d, d')` holds `X_(dd') C_{-d,-d'}` at entries
/// `((i_d, r), (i_d', r))` and zero whenever the components differ.
pub fn eta_hessian(coeff: &CpTensor, x: &DenseTensor) -> Result<Matrix> {
    check_dims(coeff, x)?;
    let size = coeff.num_entries();
    let mut h = Matrix::zeros(size, size);
    let order = coeff.order();
    if order < 2 {
        return Ok(h);
    }
    let rank = coeff.rank();
    let dims = coeff.dims();
    let offsets = block_offsets(coeff);
    for d1 in 0..order {
        for d2 in d1 + 1..order {
            let chain = coeff.chain_without(&[d1, d2])?;
            let m = mode_dd_matricize(x, d1, d2)? * chain;
            let (p1, p2) = (dims[d1], dims[d2]);
            for r in 0..rank {
                for i2 in 0..p2 {
                    for i1 in 0..p1 {
                        let v = m[(i1 + i2 * p1, r)];
                        let a = offsets[d1] + i1 + r * p1;
                        let b = offsets[d2] + i2 + r * p2;
                        h[(a, b)] = v;
                        h[(b, a)] = v;
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Free parameters of a model with these shapes, in the order used by the
/// score, information and standard errors.
pub(crate) fn free_parameters(dims: &[usize], rank: usize, p0: usize) -> (Vec<ParamKey>, Vec<usize>) {
    let mut keys = Vec::new();
    let mut positions = Vec::new();
    let mut offset = 0;
    for (d, &p) in dims.iter().enumerate() {
        let fixed = unpenalized_mask(dims, rank, d);
        for (j, &is_fixed) in fixed.iter().enumerate().take(p * rank) {
            if !is_fixed {
                keys.push(ParamKey::Factor {
                    mode: d,
                    row: j % p,
                    col: j / p,
                });
                positions.push(offset + j);
            }
        }
        offset += p * rank;
    }
    keys.push(ParamKey::Intercept);
    keys.extend((0..p0).map(ParamKey::Covariate));
    (keys, positions)
}

/// Per-sample pieces shared by score, information and Hessian.
struct Pieces {
    /// Free-parameter gradients of `eta_i`, one column per sample.
    grads: Matrix,
    eta: Vec<f64>,
    positions: Vec<usize>,
    keys: Vec<ParamKey>,
}

fn pieces(model: &TensorGlmModel, dataset: &TensorGlmDataset) -> Result<Pieces> {
    let point = model.point();
    let eta = point.linear_predictors(dataset)?;
    let coeff = &model.coeff;
    let (keys, positions) = free_parameters(coeff.dims(), coeff.rank(), dataset.p0());
    let kernels = (0..coeff.order())
        .map(|d| BlockKernel::new(coeff, d))
        .collect::<Result<Vec<_>>>()?;
    let nfactor = positions.len();
    let mut grads = Matrix::zeros(keys.len(), dataset.n());
    let z = dataset.z();
    for (i, x) in dataset.x().iter().enumerate() {
        let full = gradient_with(&kernels, coeff, x);
        let mut col = grads.column_mut(i);
        for (k, &pos) in positions.iter().enumerate() {
            col[k] = full[pos];
        }
        col[nfactor] = 1.0;
        for j in 0..z.ncols() {
            col[nfactor + 1 + j] = z[(i, j)];
        }
    }
    Ok(Pieces {
        grads,
        eta,
        positions,
        keys,
    })
}

/// Log-likelihood at the model's parameters and dispersion.
pub fn log_likelihood_at(model: &TensorGlmModel, dataset: &TensorGlmDataset) -> Result<f64> {
    let eta = model.point().linear_predictors(dataset)?;
    log_likelihood(model.family, dataset.y(), &eta, model.phi)
}

/// Score `sum_i (y_i - mu_i) mu'(eta_i) / sigma_i^2 * grad eta_i` over the
/// free parameters. With canonical links the weight reduces to
/// `(y_i - mu_i) / phi`.
pub fn score_vector(model: &TensorGlmModel, dataset: &TensorGlmDataset) -> Result<DVector<f64>> {
    let p = pieces(model, dataset)?;
    Ok(score_from(model, dataset, &p))
}

fn score_from(model: &TensorGlmModel, dataset: &TensorGlmDataset, p: &Pieces) -> DVector<f64> {
    let resid = DVector::from_iterator(
        dataset.n(),
        dataset
            .y()
            .iter()
            .zip(&p.eta)
            .map(|(&y, &e)| (y - model.family.mean(e)) / model.phi),
    );
    &p.grads * resid
}

/// Fisher information `sum_i mu'(eta_i)^2 / sigma_i^2 * g_i g_i^T` over the
/// free parameters.
pub fn information_matrix(model: &TensorGlmModel, dataset: &TensorGlmDataset) -> Result<Matrix> {
    let p = pieces(model, dataset)?;
    Ok(information_from(model, &p))
}

fn information_from(model: &TensorGlmModel, p: &Pieces) -> Matrix {
    let mut weighted = p.grads.clone();
    for (i, mut col) in weighted.column_iter_mut().enumerate() {
        let mu = model.family.mean(p.eta[i]);
        col *= model.family.variance(mu) / model.phi;
    }
    let info = &weighted * p.grads.transpose();
    (&info + info.transpose()) * 0.5
}

/// Hessian of the log-likelihood over the free parameters:
/// `sum_i [-mu'^2 / sigma^2 g_i g_i^T + (y_i - mu_i) / phi * d^2 eta_i]`.
/// The `theta''` term vanishes for canonical links.
pub fn log_density_hessian(model: &TensorGlmModel, dataset: &TensorGlmDataset) -> Result<Matrix> {
    let p = pieces(model, dataset)?;
    let mut h = -information_from(model, &p);
    if model.coeff.order() < 2 {
        return Ok(h);
    }
    // d^2 eta is linear in x, so the residual-weighted sum collapses to one tensor.
    let mut weighted = DenseTensor::zeros(dataset.dims().to_vec())?;
    for ((x, &y), &e) in dataset.x().iter().zip(dataset.y()).zip(&p.eta) {
        let w = (y - model.family.mean(e)) / model.phi;
        if w == 0.0 {
            continue;
        }
        for (a, &b) in weighted.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *a += w * b;
        }
    }
    let full = eta_hessian(&model.coeff, &weighted)?;
    for (a, &pa) in p.positions.iter().enumerate() {
        for (b, &pb) in p.positions.iter().enumerate() {
            h[(a, b)] += full[(pa, pb)];
        }
    }
    Ok(h)
}

/// Score, information and `sqrt(diag(I^{-1}))` standard errors. The
/// information is summed over the sample, so no further scaling by `n`. The
/// first rows of `B_1..B_{D-1}` are held at their current values, which are
/// ones for unpenalized fits.
pub fn score_and_information(model: &TensorGlmModel, dataset: &TensorGlmDataset) -> Result<InferenceReport> {
    let p = pieces(model, dataset)?;
    let score = score_from(model, dataset, &p);
    let information = information_from(model, &p);
    let inverse = invert_information(&information)?;
    let std_errors = DVector::from_iterator(
        inverse.nrows(),
        inverse.diagonal().iter().map(|&v| v.max(0.0).sqrt()),
    );
    Ok(InferenceReport {
        score,
        information,
        std_errors,
        free_parameters: p.keys,
    })
}

fn invert_information(info: &Matrix) -> Result<Matrix> {
    let dim = info.nrows();
    let eig = info.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let tol = max * dim as f64 * 1e-12;
    let rank = eig.eigenvalues.iter().filter(|&&v| v > tol).count();
    if rank < dim || max == 0.0 {
        return Err(Error::SingularInformation { rank, dim });
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let v = &eig.eigenvectors;
    Ok(v * Matrix::from_diagonal(&inv_vals) * v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{cp_to_full, inner};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cp(dims: &[usize], rank: usize, rng: &mut ChaCha8Rng) -> CpTensor {
        CpTensor::new(dims.iter().map(|&p| Matrix::from_fn(p, rank, |_, _| rng.gen_range(-1.0..1.0))).collect())
            .unwrap()
    }

    fn random_tensor(dims: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
        let len = dims.iter().product();
        DenseTensor::new(dims.to_vec(), (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn perturbed(coeff: &CpTensor, pos: usize, h: f64) -> CpTensor {
        let mut factors = coeff.factors().to_vec();
        let mut offset = 0;
        for f in factors.iter_mut() {
            let len = f.len();
            if pos < offset + len {
                f.as_mut_slice()[pos - offset] += h;
                break;
            }
            offset += len;
        }
        CpTensor::new(factors).unwrap()
    }

    fn eta(coeff: &CpTensor, x: &DenseTensor) -> f64 {
        inner(&cp_to_full(coeff), x).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let dims = [3, 4, 2];
        let coeff = random_cp(&dims, 2, &mut rng);
        let x = random_tensor(&dims, &mut rng);
        let g = eta_gradient(&coeff, &x).unwrap();
        let h = 1e-6;
        for j in 0..coeff.num_entries() {
            let fd = (eta(&perturbed(&coeff, j, h), &x) - eta(&perturbed(&coeff, j, -h), &x)) / (2.0 * h);
            assert!((g[j] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "entry {j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn rank_one_matrix_gradient_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let coeff = random_cp(&[3, 4], 1, &mut rng);
        let x = random_tensor(&[3, 4], &mut rng);
        let xm = x.to_matrix().unwrap();
        let g = eta_gradient(&coeff, &x).unwrap();
        let b1 = &xm * coeff.factor(1);
        let b2 = xm.transpose() * coeff.factor(0);
        for i in 0..3 {
            assert!((g[i] - b1[i]).abs() < 1e-14);
        }
        for i in 0..4 {
            assert!((g[3 + i] - b2[i]).abs() < 1e-14);
        }
        let zero = DenseTensor::zeros(vec![3, 4]).unwrap();
        assert!(eta_gradient(&coeff, &zero).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hessian_matches_differences_of_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let dims = [3, 4, 2];
        let coeff = random_cp(&dims, 2, &mut rng);
        let x = random_tensor(&dims, &mut rng);
        let hess = eta_hessian(&coeff, &x).unwrap();
        let step = 1e-5;
        for j in 0..coeff.num_entries() {
            let gp = eta_gradient(&perturbed(&coeff, j, step), &x).unwrap();
            let gm = eta_gradient(&perturbed(&coeff, j, -step), &x).unwrap();
            for i in 0..coeff.num_entries() {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                assert!((hess[(i, j)] - fd).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn hessian_vanishes_across_components_and_for_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(74);
        let dims = [2, 3, 2];
        let coeff = random_cp(&dims, 3, &mut rng);
        let x = random_tensor(&dims, &mut rng);
        let h = eta_hessian(&coeff, &x).unwrap();
        let mut comp = Vec::new();
        for &p in &dims {
            for r in 0..3 {
                comp.extend(std::iter::repeat_n(r, p));
            }
        }
        for a in 0..h.nrows() {
            for b in 0..h.ncols() {
                if comp[a] != comp[b] {
                    assert_eq!(h[(a, b)], 0.0);
                }
            }
        }

        let v = random_cp(&[5], 2, &mut rng);
        let xv = random_tensor(&[5], &mut rng);
        assert!(eta_hessian(&v, &xv).unwrap().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn free_parameters_drop_fixed_rows() {
        let (keys, pos) = free_parameters(&[3, 4], 2, 2);
        assert_eq!(pos.len(), 2 * 2 + 4 * 2);
        assert_eq!(keys.len(), pos.len() + 3);
        assert!(!pos.contains(&0) && !pos.contains(&3));
        assert_eq!(keys[pos.len()], ParamKey::Intercept);
        assert_eq!(keys.last(), Some(&ParamKey::Covariate(1)));
    }
}
