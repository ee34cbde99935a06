use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TensorGlmModel;
use crate::error::{Error, Result};
use crate::glm::GlmFamily;
use crate::regularization::PenaltySpec;
use crate::tensor::{CpTensor, Matrix};

pub const FORMAT: &str = "tensorreg-model";
pub const FORMAT_VERSION: u32 = 1;

/// Serialized form of a fitted model. Factors are stored row-major:
/// `factors[d][i][r]` is entry `(i, r)` of `B_d`. Floats are written with
/// shortest round-trip formatting, so a reloaded model predicts bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub family: GlmFamily,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub dims: Vec<usize>,
    pub rank: usize,
    pub factors: Vec<Vec<Vec<f64>>>,
    pub phi: f64,
    pub loglik: f64,
    pub objective: f64,
    pub bic: f64,
    pub df: usize,
    pub n: usize,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: usize,
    pub best_restart: usize,
    pub penalty: Option<PenaltySpec>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ModelDocument {
    pub fn from_model(model: &TensorGlmModel) -> Self {
        let factors = model
            .coeff
            .factors()
            .iter()
            .map(|f| f.row_iter().map(|row| row.iter().copied().collect()).collect())
            .collect();
        Self {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            family: model.family,
            alpha: model.alpha,
            gamma: model.gamma.clone(),
            dims: model.coeff.dims().to_vec(),
            rank: model.rank(),
            factors,
            phi: model.phi,
            loglik: model.loglik,
            objective: model.objective,
            bic: model.bic,
            df: model.df,
            n: model.n,
            trace: model.trace.clone(),
            converged: model.converged,
            iterations: model.iterations,
            restarts: model.restarts_used,
            best_restart: model.best_restart,
            penalty: model.penalty,
            warnings: model.warnings.clone(),
        }
    }

    pub fn into_model(self) -> Result<TensorGlmModel> {
        if self.format != FORMAT {
            return Err(Error::Input(format!("not a model document (format {:?})", self.format)));
        }
        if self.factors.len() != self.dims.len() {
            return Err(Error::Input(format!(
                "{} factors for {} dims",
                self.factors.len(),
                self.dims.len()
            )));
        }
        let mut mats = Vec::with_capacity(self.factors.len());
        for (d, (rows, &p)) in self.factors.iter().zip(&self.dims).enumerate() {
            if rows.len() != p || rows.iter().any(|r| r.len() != self.rank) {
                return Err(Error::Input(format!(
                    "factor {} is not {p} x {}",
                    d + 1,
                    self.rank
                )));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            mats.push(Matrix::from_row_slice(p, self.rank, &flat));
        }
        Ok(TensorGlmModel {
            family: self.family,
            alpha: self.alpha,
            gamma: self.gamma,
            coeff: CpTensor::new(mats)?,
            phi: self.phi,
            loglik: self.loglik,
            objective: self.objective,
            bic: self.bic,
            df: self.df,
            n: self.n,
            trace: self.trace,
            converged: self.converged,
            iterations: self.iterations,
            restarts_used: self.restarts,
            best_restart: self.best_restart,
            penalty: self.penalty,
            warnings: self.warnings,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl TensorGlmModel {
    pub fn to_json(&self) -> Result<String> {
        ModelDocument::from_model(self).to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        ModelDocument::from_json(text)?.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ModelDocument::from_model(self).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelDocument::load(path)?.into_model()
    }
}
