use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{default_eta_scale, generate_shape, rmse, simulate, ShapeSpec, SimSpec};
use crate::error::{domain, Error, Result};
use crate::glm::GlmFamily;
use crate::model::{fit, select_rank, FitConfig, TensorGlmModel};
use crate::parallel;
use crate::regularization::PenaltySpec;
use crate::tensor::cp_to_full;

/// How the rank is chosen within each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RankChoice {
    Fixed(usize),
    Bic { max_rank: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub shape: ShapeSpec,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub family: GlmFamily,
    pub gamma: Vec<f64>,
    pub rank: RankChoice,
    pub seed: u64,
    /// Fit settings; `rank` and `seed` are overridden per replicate.
    pub config: FitConfig,
}

impl StudySpec {
    /// The image study defaults: five covariates with `gamma = 1`, normal
    /// responses and BIC rank selection up to 3.
    pub fn new(shape: ShapeSpec, n_grid: Vec<usize>, replicates: usize) -> Self {
        Self {
            shape,
            n_grid,
            replicates,
            family: GlmFamily::Normal,
            gamma: vec![1.0; 5],
            rank: RankChoice::Bic { max_rank: 3 },
            seed: 0,
            config: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub n: usize,
    pub replicate: usize,
    pub rank: usize,
    pub rmse_b: f64,
    pub rmse_gamma: f64,
    pub converged: bool,
    /// See [`TensorGlmModel::max_trace_drop`].
    pub max_trace_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub n: usize,
    pub replicate: usize,
    pub message: String,
}

/// One line of the study table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub shape: String,
    pub n: usize,
    pub param: String,
    pub mean_rmse: f64,
    pub sd_rmse: f64,
    pub rank_selected_mode: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub replicates: Vec<ReplicateResult>,
    pub failures: Vec<ReplicateFailure>,
}

pub const STUDY_HEADER: [&str; 6] = ["shape", "n", "param", "mean_rmse", "sd_rmse", "rank_selected_mode"];

impl StudyTable {
    pub fn row(&self, n: usize, param: &str) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.n == n && r.param == param)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(STUDY_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.shape.clone(),
                r.n.to_string(),
                r.param.clone(),
                r.mean_rmse.to_string(),
                r.sd_rmse.to_string(),
                r.rank_selected_mode.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Seed and stream of replicate `k` at grid position `g`: the simulation uses
/// stream `g * 2^32 + k` of the study seed, and the fit seed is the first
/// word drawn from that same stream position offset by `2^63`.
fn replicate_seeds(seed: u64, g: usize, k: usize) -> (u64, u64) {
    let stream = ((g as u64) << 32) | k as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream | (1 << 63));
    (stream, rng.next_u64())
}

fn fit_replicate(spec: &StudySpec, dataset: &crate::model::TensorGlmDataset, fit_seed: u64) -> Result<TensorGlmModel> {
    let config = FitConfig {
        seed: fit_seed,
        ..spec.config.clone()
    };
    let result = match spec.rank {
        RankChoice::Fixed(rank) => fit(dataset, spec.family, &FitConfig { rank, ..config }),
        RankChoice::Bic { max_rank } => select_rank(dataset, spec.family, max_rank, &config).map(|s| s.model),
    };
    match result {
        Err(Error::NotConverged { model }) => Ok(*model),
        other => other,
    }
}

/// Simulates, fits and scores `replicates` datasets per sample size. RMSEs are
/// measured against the coefficients on the linear-predictor scale
/// (`eta_scale * B`, `eta_scale * gamma`). Failed replicates are reported and
/// left out of the summaries.
pub fn run_consistency_study(spec: &StudySpec) -> Result<StudyTable> {
    if spec.replicates < 2 {
        return domain("a study needs at least 2 replicates");
    }
    if spec.n_grid.is_empty() {
        return domain("empty sample-size grid");
    }
    let signal = generate_shape(&spec.shape)?;
    let scale = default_eta_scale(spec.family);
    let truth_b: Vec<f64> = signal.as_slice().iter().map(|v| v * scale).collect();
    let truth_g: Vec<f64> = spec.gamma.iter().map(|v| v * scale).collect();

    let jobs: Vec<(usize, usize)> = (0..spec.n_grid.len())
        .flat_map(|g| (0..spec.replicates).map(move |k| (g, k)))
        .collect();
    let outcomes: Vec<(usize, usize, Result<ReplicateResult>)> = parallel::install(|| {
        jobs.par_iter()
            .map(|&(g, k)| {
                let n = spec.n_grid[g];
                let (stream, fit_seed) = replicate_seeds(spec.seed, g, k);
                let run = || -> Result<ReplicateResult> {
                    let mut sim = SimSpec::new(signal.clone(), spec.gamma.clone(), spec.family, n, spec.seed);
                    sim.stream = stream;
                    let data = simulate(&sim)?;
                    let model = fit_replicate(spec, &data, fit_seed)?;
                    Ok(ReplicateResult {
                        n,
                        replicate: k,
                        rank: model.rank(),
                        rmse_b: rmse(cp_to_full(&model.coeff).as_slice(), &truth_b)?,
                        rmse_gamma: rmse(&model.gamma, &truth_g)?,
                        converged: model.converged,
                        max_trace_drop: model.max_trace_drop(),
                    })
                };
                (g, k, run())
            })
            .collect()
    });

    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (g, k, out) in outcomes {
        match out {
            Ok(r) => replicates.push(r),
            Err(e) => failures.push(ReplicateFailure {
                n: spec.n_grid[g],
                replicate: k,
                message: e.to_string(),
            }),
        }
    }
    replicates.sort_by_key(|r| (r.n, r.replicate));

    let shape = spec.shape.name.to_string();
    let mut rows = Vec::new();
    for &n in &spec.n_grid {
        let reps: Vec<&ReplicateResult> = replicates.iter().filter(|r| r.n == n).collect();
        let mode = rank_mode(reps.iter().map(|r| r.rank));
        for (param, values) in [
            ("B", reps.iter().map(|r| r.rmse_b).collect::<Vec<_>>()),
            ("gamma", reps.iter().map(|r| r.rmse_gamma).collect()),
        ] {
            let (mean, sd) = mean_sd(&values);
            rows.push(StudyRow {
                shape: shape.clone(),
                n,
                param: param.to_string(),
                mean_rmse: mean,
                sd_rmse: sd,
                rank_selected_mode: mode,
            });
        }
    }
    Ok(StudyTable {
        rows,
        replicates,
        failures,
    })
}

/// Most frequent rank, ties to the smaller; 0 when there are no results.
fn rank_mode(ranks: impl Iterator<Item = usize>) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for r in ranks {
        *counts.entry(r).or_insert(0usize) += 1;
    }
    let mut best = (0, 0);
    for (rank, c) in counts {
        if c > best.1 {
            best = (rank, c);
        }
    }
    best.0
}

/// Mean and sample standard deviation; the deviation is NaN for fewer than two values.
pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyStudySpec {
    pub shape: ShapeSpec,
    pub n: usize,
    pub rank: usize,
    /// Tuning values; 0 gives the unpenalized fit.
    pub rhos: Vec<f64>,
    /// Penalty family; `rho` is replaced by each grid value.
    pub penalty: PenaltySpec,
    pub replicates: usize,
    pub family: GlmFamily,
    pub gamma: Vec<f64>,
    pub seed: u64,
    pub config: FitConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyStudy {
    pub rhos: Vec<f64>,
    /// `rmse_b[k][j]`: replicate k at `rhos[j]`; NaN where the fit failed.
    pub rmse_b: Vec<Vec<f64>>,
    /// Largest objective decrease seen in any trace of the study.
    pub max_trace_drop: f64,
}

impl PenaltyStudy {
    pub fn mean_rmse(&self) -> Vec<f64> {
        (0..self.rhos.len())
            .map(|j| {
                let vals: Vec<f64> = self.rmse_b.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
                mean_sd(&vals).0
            })
            .collect()
    }
}

/// Fits the same simulated datasets along a penalty grid and records RMSE_B
/// per replicate and tuning value.
pub fn run_penalty_study(spec: &PenaltyStudySpec) -> Result<PenaltyStudy> {
    if spec.rhos.is_empty() || spec.replicates == 0 {
        return domain("penalty study needs rhos and replicates");
    }
    let signal = generate_shape(&spec.shape)?;
    let scale = default_eta_scale(spec.family);
    let truth: Vec<f64> = signal.as_slice().iter().map(|v| v * scale).collect();
    let penalties = spec
        .rhos
        .iter()
        .map(|&rho| spec.penalty.with_rho(rho))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Result<(Vec<f64>, f64)>> = parallel::install(|| {
        (0..spec.replicates)
            .into_par_iter()
            .map(|k| {
                let (stream, fit_seed) = replicate_seeds(spec.seed, 0, k);
                let mut sim = SimSpec::new(signal.clone(), spec.gamma.clone(), spec.family, spec.n, spec.seed);
                sim.stream = stream;
                let data = simulate(&sim)?;
                let mut drop = 0.0f64;
                let row = penalties
                    .iter()
                    .map(|p| {
                        let config = FitConfig {
                            rank: spec.rank,
                            seed: fit_seed,
                            penalty: Some(*p),
                            ..spec.config.clone()
                        };
                        let model = match fit(&data, spec.family, &config) {
                            Ok(m) => m,
                            Err(Error::NotConverged { model }) => *model,
                            Err(e) => {
                                log::warn!("replicate {k} rho {}: {e}", p.rho);
                                return f64::NAN;
                            }
                        };
                        drop = drop.max(model.max_trace_drop());
                        rmse(cp_to_full(&model.coeff).as_slice(), &truth).unwrap_or(f64::NAN)
                    })
                    .collect();
                Ok((row, drop))
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PenaltyStudy {
        rhos: spec.rhos.clone(),
        max_trace_drop: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        rmse_b: rows.into_iter().map(|r| r.0).collect(),
    })
}
