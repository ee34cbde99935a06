//! Synthetic signals, response simulation and replication studies.

mod study;

pub use study::{
    run_consistency_study, run_penalty_study, PenaltyStudy, PenaltyStudySpec, RankChoice, ReplicateFailure,
    ReplicateResult, StudyRow, StudySpec, StudyTable,
};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::glm::GlmFamily;
use crate::model::TensorGlmDataset;
use crate::tensor::{algebra_dot, CpTensor, DenseTensor, Matrix};

/// Smallest image side accepted by [`generate_shape`].
pub const MIN_SHAPE_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeName {
    Square,
    TShape,
    Cross,
    Disk,
    Triangle,
    Butterfly,
}

impl ShapeName {
    pub const ALL: [ShapeName; 6] = [
        Self::Square,
        Self::TShape,
        Self::Cross,
        Self::Disk,
        Self::Triangle,
        Self::Butterfly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Square => "square",
            Self::TShape => "t_shape",
            Self::Cross => "cross",
            Self::Disk => "disk",
            Self::Triangle => "triangle",
            Self::Butterfly => "butterfly",
        }
    }
}

impl fmt::Display for ShapeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShapeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "square" => Ok(Self::Square),
            "t_shape" | "t" | "tshape" => Ok(Self::TShape),
            "cross" => Ok(Self::Cross),
            "disk" => Ok(Self::Disk),
            "triangle" => Ok(Self::Triangle),
            "butterfly" => Ok(Self::Butterfly),
            other => domain(format!("unknown shape {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub name: ShapeName,
    pub size: usize,
}

impl ShapeSpec {
    pub fn new(name: ShapeName, size: usize) -> Self {
        Self { name, size }
    }
}

/// Binary `size x size` image signal.
///
/// With `s = size`, `w = max(s / 8, 1)` and `m = s / 8`:
/// - square: side `s / 4 + 1` starting at `(s - side) / 2` in both axes;
/// - t_shape: rows `[m, m + w)` over columns `[m, s - m)`, plus the stem
///   rows `[m + w, s - m)` over columns `[s/2 - w/2, s/2 - w/2 + w)`;
/// - cross: the horizontal bar through the center rows over `[m, s - m)`
///   and the vertical bar through the center columns over `[m, s - m)`;
/// - disk: `(i - s/2)^2 + (j - s/2)^2 <= (s / 5)^2`;
/// - triangle: lower-left right triangle with legs `s / 2` starting at `s / 4`;
/// - butterfly: `|i - c| <= |j - c|` with `c = (s - 1) / 2`, columns `[m, s - m)`.
///
/// Ranks: square 1, t_shape and cross 2, triangle and butterfly above 3 from
/// size 16, disk above 3 from size 32.
pub fn generate_shape(spec: &ShapeSpec) -> Result<DenseTensor> {
    let s = spec.size;
    if s < MIN_SHAPE_SIZE {
        return domain(format!("shape size must be at least {MIN_SHAPE_SIZE}, got {s}"));
    }
    let w = (s / 8).max(1);
    let m = s / 8;
    let bar = s / 2 - w / 2;
    let mut img = Matrix::zeros(s, s);
    let mut fill = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        for i in rows {
            for j in cols.clone() {
                img[(i, j)] = 1.0;
            }
        }
    };
    match spec.name {
        ShapeName::Square => {
            let side = s / 4 + 1;
            let lo = (s - side) / 2;
            fill(lo..lo + side, lo..lo + side);
        }
        ShapeName::TShape => {
            fill(m..m + w, m..s - m);
            fill(m + w..s - m, bar..bar + w);
        }
        ShapeName::Cross => {
            fill(bar..bar + w, m..s - m);
            fill(m..s - m, bar..bar + w);
        }
        ShapeName::Disk => {
            let c = (s / 2) as f64;
            let r = s as f64 / 5.0;
            for i in 0..s {
                for j in 0..s {
                    let (di, dj) = (i as f64 - c, j as f64 - c);
                    if di * di + dj * dj <= r * r {
                        img[(i, j)] = 1.0;
                    }
                }
            }
        }
        ShapeName::Triangle => {
            let lo = s / 4;
            for k in 0..s / 2 {
                fill(lo + k..lo + k + 1, lo..lo + k + 1);
            }
        }
        ShapeName::Butterfly => {
            let c = (s as f64 - 1.0) / 2.0;
            for i in 0..s {
                for j in m..s - m {
                    if (i as f64 - c).abs() <= (j as f64 - c).abs() {
                        img[(i, j)] = 1.0;
                    }
                }
            }
        }
    }
    DenseTensor::from_matrix(&img)
}

/// Smooth "ball" factors: column `r` of every factor is zero except the
/// window `offsets[r] + j`, `j = 0..=half_period`, which holds
/// `sin(j pi / half_period)`.
pub fn generate_ball_signal(dims: &[usize], offsets: &[usize], half_period: usize) -> Result<CpTensor> {
    if offsets.is_empty() {
        return domain("at least one ball is needed");
    }
    if half_period == 0 {
        return domain("half period must be positive");
    }
    let len = half_period + 1;
    let mut factors = Vec::with_capacity(dims.len());
    for (d, &p) in dims.iter().enumerate() {
        let mut f = Matrix::zeros(p, offsets.len());
        for (r, &off) in offsets.iter().enumerate() {
            if off + len > p {
                return domain(format!(
                    "window [{off}, {}) overflows mode {} of size {p}",
                    off + len,
                    d + 1
                ));
            }
            for j in 0..len {
                f[(off + j, r)] = if j == 0 || j == half_period {
                    0.0
                } else {
                    (j as f64 * std::f64::consts::PI / half_period as f64).sin()
                };
            }
        }
        factors.push(f);
    }
    CpTensor::new(factors)
}

/// Simulation design: `z` and `x` entries iid standard normal,
/// `eta = gamma^T z + <B, x>`, and the response drawn from `family` at
/// linear predictor `eta_scale * eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub signal: DenseTensor,
    pub gamma: Vec<f64>,
    pub family: GlmFamily,
    pub n: usize,
    pub seed: u64,
    /// ChaCha stream; replicates of a study use distinct streams.
    pub stream: u64,
    pub eta_scale: f64,
}

impl SimSpec {
    pub fn new(signal: DenseTensor, gamma: Vec<f64>, family: GlmFamily, n: usize, seed: u64) -> Self {
        Self {
            signal,
            gamma,
            family,
            n,
            seed,
            stream: 0,
            eta_scale: default_eta_scale(family),
        }
    }
}

/// 1 for normal, 0.1 for bernoulli and 0.01 for poisson responses.
pub fn default_eta_scale(family: GlmFamily) -> f64 {
    match family {
        GlmFamily::Normal => 1.0,
        GlmFamily::Bernoulli => 0.1,
        GlmFamily::Poisson => 0.01,
    }
}

pub fn simulate(spec: &SimSpec) -> Result<TensorGlmDataset> {
    if spec.n == 0 {
        return domain("simulation needs n >= 1");
    }
    if !spec.eta_scale.is_finite() {
        return domain("eta_scale must be finite");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(spec.stream);
    let p0 = spec.gamma.len();
    let len = spec.signal.len();
    let dims = spec.signal.dims().to_vec();
    let mut z = Matrix::zeros(spec.n, p0);
    let mut x = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut eta = 0.0;
        for j in 0..p0 {
            let v: f64 = StandardNormal.sample(&mut rng);
            z[(i, j)] = v;
            eta += v * spec.gamma[j];
        }
        let data: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
        eta += algebra_dot(spec.signal.as_slice(), &data);
        x.push(DenseTensor::new(dims.clone(), data)?);
        let eta = spec.eta_scale * eta;
        let yi = match spec.family {
            GlmFamily::Normal => eta + Distribution::<f64>::sample(&StandardNormal, &mut rng),
            GlmFamily::Bernoulli => {
                let p = spec.family.mean(eta);
                if rng.gen::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            GlmFamily::Poisson => {
                let mu = spec.family.mean(eta);
                Poisson::new(mu)
                    .map_err(|e| Error::Numeric(format!("poisson mean {mu}: {e}")))?
                    .sample(&mut rng)
            }
        };
        y.push(yi);
    }
    TensorGlmDataset::new(y, z, x)
}

/// Root mean squared error `||estimate - truth|| / sqrt(len)`.
pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return domain(format!(
            "rmse of vectors with lengths {} and {}",
            estimate.len(),
            truth.len()
        ));
    }
    if estimate.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / estimate.len() as f64).sqrt())
}
