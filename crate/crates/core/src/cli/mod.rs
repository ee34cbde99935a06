//! Command-line front-end: `fit`, `simulate`, `benchmark`, `rank-select`
//! and `inspect`.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 no restart converged
//! (the model is still written).

pub mod files;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{
    generate_shape, run_consistency_study, simulate, RankChoice, ShapeName, ShapeSpec, SimSpec, StudySpec,
};
use crate::error::{Error, Result};
use crate::glm::GlmFamily;
use crate::model::{bic, check_uniqueness, effective_parameters, fit, select_rank, FitConfig, TensorGlmDataset, TensorGlmModel};
use crate::regularization::PenaltySpec;
use crate::tensor::io::{parse_tensor_file, write_tensor_file};
use crate::tensor::Matrix;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tensorreg", version, about = "Rank-R generalized linear tensor regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a tensor GLM of fixed rank.
    Fit(FitArgs),
    /// Simulate a shape-signal dataset.
    Simulate(SimulateArgs),
    /// Run a replicated consistency study and write its table as CSV.
    Benchmark(BenchmarkArgs),
    /// Fit ranks 1..=max and keep the BIC minimizer.
    RankSelect(RankSelectArgs),
    /// Summarize a saved model, optionally re-scoring it on data.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Tensor covariates in TNSR format (count-prefixed stack).
    #[arg(long)]
    pub tensors: PathBuf,
    /// Response CSV with a single column `y`.
    #[arg(long)]
    pub response: PathBuf,
    /// Covariate CSV, one named column per covariate.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value = "normal")]
    pub family: String,
    /// Penalty family: lasso, ridge, power, bridge, elastic-net or scad.
    #[arg(long)]
    pub penalty: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// Penalty index; defaults depend on the family.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub restarts: u64,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iters: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub rank: u64,
    /// Output directory for model.json, trace.csv and coefficient.pgm.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankSelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_rank: u64,
    /// Output directory for model.json, trace.csv, bic.csv and coefficient.pgm.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "square")]
    pub shape: String,
    /// Image side length.
    #[arg(long, default_value_t = 64)]
    pub dims: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value = "normal")]
    pub family: String,
    /// Number of ordinary covariates, each with coefficient 1.
    #[arg(long, default_value_t = 5)]
    pub p0: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for x.tnsr, y.csv, z.csv and truth.pgm.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, default_value = "square")]
    pub shape: String,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [500usize, 750, 1000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    /// Image side length.
    #[arg(long, default_value_t = 16)]
    pub dims: usize,
    #[arg(long, default_value = "normal")]
    pub family: String,
    /// Fixed rank; without it the rank is chosen by BIC up to --max-rank.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rank: Option<u64>,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_rank: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub restarts: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, requires = "response")]
    pub tensors: Option<PathBuf>,
    #[arg(long, requires = "tensors")]
    pub response: Option<PathBuf>,
    #[arg(long, requires = "tensors")]
    pub covariates: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::RankSelect(a) => cmd_rank_select(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    }
}

/// Loads tensors, response and optional covariates, checking that the sample
/// counts agree.
pub fn load_dataset(tensors: &Path, response: &Path, covariates: Option<&Path>) -> Result<TensorGlmDataset> {
    let x = parse_tensor_file(tensors)?;
    let y = files::read_response(response)?;
    if x.len() != y.len() {
        return Err(Error::Input(format!(
            "{} holds {} tensors but {} holds {} responses",
            tensors.display(),
            x.len(),
            response.display(),
            y.len()
        )));
    }
    let z = match covariates {
        Some(p) => {
            let (_, z) = files::read_covariates(p)?;
            if z.nrows() != y.len() {
                return Err(Error::Input(format!(
                    "{} holds {} rows but {} holds {} responses",
                    p.display(),
                    z.nrows(),
                    response.display(),
                    y.len()
                )));
            }
            z
        }
        None => Matrix::zeros(y.len(), 0),
    };
    TensorGlmDataset::new(y, z, x)
}

fn fit_config(s: &SolverArgs, rank: usize) -> Result<(GlmFamily, FitConfig)> {
    let family = GlmFamily::from_name(&s.family)?;
    let penalty = match &s.penalty {
        Some(name) => Some(PenaltySpec::from_name(name, s.rho, s.lambda)?),
        None if s.rho != 0.0 || s.lambda.is_some() => {
            return Err(Error::Input("--rho/--lambda need --penalty".into()));
        }
        None => None,
    };
    let config = FitConfig {
        rank,
        epsilon: s.epsilon,
        max_outer_iters: s.max_iters as usize,
        restarts: s.restarts as usize,
        seed: s.seed,
        penalty,
        ..FitConfig::default()
    };
    config.validate()?;
    Ok((family, config))
}

/// Writes model.json, trace.csv and, for matrix coefficients, coefficient.pgm.
fn write_model_outputs(out: &Path, model: &TensorGlmModel) -> Result<()> {
    fs::create_dir_all(out)?;
    model.save(&out.join("model.json"))?;
    files::write_trace(&out.join("trace.csv"), &model.trace)?;
    if model.coeff.order() == 2 {
        files::write_pgm(&out.join("coefficient.pgm"), &model.coeff.to_full(), "estimated B")?;
    }
    Ok(())
}

fn finish(out: &Path, result: Result<TensorGlmModel>) -> Result<i32> {
    let (model, code) = match result {
        Ok(m) => (m, EXIT_OK),
        Err(Error::NotConverged { model }) => (*model, EXIT_NOT_CONVERGED),
        Err(e) => return Err(e),
    };
    write_model_outputs(out, &model)?;
    summarize(&model, &mut std::io::stdout().lock())?;
    if code == EXIT_NOT_CONVERGED {
        eprintln!("warning: no restart converged; best model written");
    }
    Ok(code)
}

pub fn cmd_fit(a: &FitArgs) -> Result<i32> {
    let (family, config) = fit_config(&a.solver, a.rank as usize)?;
    let data = load_dataset(&a.data.tensors, &a.data.response, a.data.covariates.as_deref())?;
    finish(&a.out, fit(&data, family, &config))
}

pub fn cmd_rank_select(a: &RankSelectArgs) -> Result<i32> {
    let (family, config) = fit_config(&a.solver, 1)?;
    let data = load_dataset(&a.data.tensors, &a.data.response, a.data.covariates.as_deref())?;
    let selection = select_rank(&data, family, a.max_rank as usize, &config)?;
    fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("bic.csv"))?;
    w.write_record(["rank", "bic", "loglik", "effective_parameters", "converged", "error"])?;
    for row in &selection.table {
        w.write_record([
            row.rank.to_string(),
            row.bic.map_or(String::new(), |v| v.to_string()),
            row.loglik.map_or(String::new(), |v| v.to_string()),
            row.effective_parameters.to_string(),
            row.converged.to_string(),
            row.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    println!("selected rank: {}", selection.selected_rank());
    let converged = selection.model.converged;
    let code = finish(&a.out, Ok(selection.model))?;
    Ok(if converged { code } else { EXIT_NOT_CONVERGED })
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let family = GlmFamily::from_name(&a.family)?;
    let shape: ShapeName = a.shape.parse()?;
    if a.n == 0 {
        return Err(Error::Input("--n must be at least 1".into()));
    }
    let signal = generate_shape(&ShapeSpec::new(shape, a.dims))?;
    let data = simulate(&SimSpec::new(signal.clone(), vec![1.0; a.p0], family, a.n, a.seed))?;
    fs::create_dir_all(&a.out)?;
    write_tensor_file(&a.out.join("x.tnsr"), data.x())?;
    files::write_response(&a.out.join("y.csv"), data.y())?;
    if a.p0 > 0 {
        files::write_covariates(&a.out.join("z.csv"), data.z())?;
    }
    files::write_pgm(&a.out.join("truth.pgm"), &signal, "true B")?;
    println!("wrote {} samples of {shape} ({}x{}) to {}", a.n, a.dims, a.dims, a.out.display());
    Ok(EXIT_OK)
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<i32> {
    let family = GlmFamily::from_name(&a.family)?;
    let shape: ShapeName = a.shape.parse()?;
    if a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(Error::Input("--sizes needs positive sample sizes".into()));
    }
    let mut spec = StudySpec::new(ShapeSpec::new(shape, a.dims), a.sizes.clone(), a.replicates);
    spec.family = family;
    spec.seed = a.seed;
    spec.rank = match a.rank {
        Some(r) => RankChoice::Fixed(r as usize),
        None => RankChoice::Bic {
            max_rank: a.max_rank as usize,
        },
    };
    spec.config.restarts = a.restarts as usize;
    let table = run_consistency_study(&spec)?;
    for f in &table.failures {
        eprintln!("replicate {} at n={} failed: {}", f.replicate, f.n, f.message);
    }
    match &a.out {
        Some(path) => {
            let file = fs::File::create(path)?;
            table.write_csv(std::io::BufWriter::new(file))?;
        }
        None => table.write_csv(std::io::stdout().lock())?,
    }
    Ok(EXIT_OK)
}

pub fn cmd_inspect(a: &InspectArgs) -> Result<i32> {
    let model = TensorGlmModel::load(&a.model)?;
    let mut out = std::io::stdout().lock();
    summarize(&model, &mut out)?;
    let report = check_uniqueness(&model.coeff);
    if let Ok(r) = report {
        writeln!(out, "k_ranks: {:?}", r.k_ranks)?;
        writeln!(out, "uniqueness_sufficient: {}", r.sufficient)?;
        writeln!(out, "uniqueness_necessary: {}", r.necessary)?;
    }
    if let (Some(t), Some(r)) = (&a.tensors, &a.response) {
        let data = load_dataset(t, r, a.covariates.as_deref())?;
        writeln!(out, "recomputed_bic: {}", bic(&model, &data)?)?;
    }
    Ok(EXIT_OK)
}

fn summarize(model: &TensorGlmModel, out: &mut impl Write) -> Result<()> {
    writeln!(out, "family: {}", model.family.name())?;
    writeln!(out, "dims: {:?}", model.coeff.dims())?;
    writeln!(out, "rank: {}", model.rank())?;
    writeln!(out, "n: {}", model.n)?;
    writeln!(out, "alpha: {}", model.alpha)?;
    writeln!(out, "gamma: {:?}", model.gamma)?;
    writeln!(out, "phi: {}", model.phi)?;
    writeln!(out, "loglik: {}", model.loglik)?;
    writeln!(out, "df: {}", model.df)?;
    writeln!(out, "bic: {}", model.bic)?;
    writeln!(out, "converged: {}", model.converged)?;
    writeln!(out, "iterations: {}", model.iterations)?;
    if model.penalty.is_none() {
        let pe = effective_parameters(model.coeff.dims(), model.rank(), model.gamma.len())?;
        writeln!(out, "effective_parameters: {pe}")?;
    }
    for w in &model.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}
