use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Default SCAD concavity parameter.
pub const SCAD_DEFAULT_LAMBDA: f64 = 3.7;
pub const ELASTIC_NET_DEFAULT_LAMBDA: f64 = 1.5;
pub const BRIDGE_DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyFamily {
    /// `rho * |beta|^lambda`, `lambda` in (0, 2].
    Power,
    Lasso,
    Ridge,
    /// `rho * [(lambda - 1) beta^2 / 2 + (2 - lambda) |beta|]`, `lambda` in [1, 2].
    ElasticNet,
    /// Smoothly clipped absolute deviation, `lambda > 2`.
    Scad,
}

/// A scalar penalty `P_lambda(|beta|, rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub rho: f64,
    pub lambda: f64,
}

impl PenaltySpec {
    /// Validates and canonicalizes: power with `lambda == 1` becomes lasso and
    /// with `lambda == 2` becomes ridge.
    pub fn new(family: PenaltyFamily, rho: f64, lambda: f64) -> Result<Self> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return domain(format!("penalty rho must be finite and >= 0, got {rho}"));
        }
        let (family, lambda) = match family {
            PenaltyFamily::Lasso => (PenaltyFamily::Lasso, 1.0),
            PenaltyFamily::Ridge => (PenaltyFamily::Ridge, 2.0),
            PenaltyFamily::Power => {
                if !(lambda > 0.0 && lambda <= 2.0) {
                    return domain(format!("power penalty needs lambda in (0, 2], got {lambda}"));
                }
                if lambda == 1.0 {
                    (PenaltyFamily::Lasso, 1.0)
                } else if lambda == 2.0 {
                    (PenaltyFamily::Ridge, 2.0)
                } else {
                    (PenaltyFamily::Power, lambda)
                }
            }
            PenaltyFamily::ElasticNet => {
                if !(1.0..=2.0).contains(&lambda) {
                    return domain(format!("elastic net needs lambda in [1, 2], got {lambda}"));
                }
                (PenaltyFamily::ElasticNet, lambda)
            }
            PenaltyFamily::Scad => {
                if !(lambda > 2.0 && lambda.is_finite()) {
                    return domain(format!("SCAD needs lambda > 2, got {lambda}"));
                }
                (PenaltyFamily::Scad, lambda)
            }
        };
        Ok(Self {
            family,
            rho,
            lambda,
        })
    }

    pub fn lasso(rho: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Lasso, rho, 1.0)
    }

    pub fn ridge(rho: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Ridge, rho, 2.0)
    }

    pub fn scad(rho: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Scad, rho, SCAD_DEFAULT_LAMBDA)
    }

    pub fn elastic_net(rho: f64, lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::ElasticNet, rho, lambda)
    }

    pub fn bridge(rho: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Power, rho, BRIDGE_DEFAULT_LAMBDA)
    }

    /// Builds a spec from a CLI-style family name, filling in the default
    /// `lambda` when none is given.
    pub fn from_name(name: &str, rho: f64, lambda: Option<f64>) -> Result<Self> {
        let (family, default) = match name {
            "lasso" => (PenaltyFamily::Lasso, 1.0),
            "ridge" => (PenaltyFamily::Ridge, 2.0),
            "power" => (PenaltyFamily::Power, BRIDGE_DEFAULT_LAMBDA),
            "bridge" => (PenaltyFamily::Power, BRIDGE_DEFAULT_LAMBDA),
            "elastic-net" | "elastic_net" | "enet" => {
                (PenaltyFamily::ElasticNet, ELASTIC_NET_DEFAULT_LAMBDA)
            }
            "scad" => (PenaltyFamily::Scad, SCAD_DEFAULT_LAMBDA),
            other => return domain(format!("unknown penalty family {other:?}")),
        };
        Self::new(family, rho, lambda.unwrap_or(default))
    }

    pub fn with_rho(self, rho: f64) -> Result<Self> {
        Self::new(self.family, rho, self.lambda)
    }

    pub fn is_active(&self) -> bool {
        self.rho > 0.0
    }

    /// True when the penalty is convex in `beta`.
    pub fn is_convex(&self) -> bool {
        match self.family {
            PenaltyFamily::Power => self.lambda >= 1.0,
            PenaltyFamily::Lasso | PenaltyFamily::Ridge | PenaltyFamily::ElasticNet => true,
            PenaltyFamily::Scad => false,
        }
    }

    pub fn value(&self, beta: f64) -> f64 {
        penalty_value(self, beta)
    }
}

/// `P_lambda(|beta|, rho)`. The SCAD value is the closed-form integral of its
/// derivative from zero.
pub fn penalty_value(spec: &PenaltySpec, beta: f64) -> f64 {
    let t = beta.abs();
    let rho = spec.rho;
    if rho == 0.0 {
        return 0.0;
    }
    match spec.family {
        PenaltyFamily::Lasso => rho * t,
        PenaltyFamily::Ridge => rho * t * t,
        PenaltyFamily::Power => rho * t.powf(spec.lambda),
        PenaltyFamily::ElasticNet => {
            rho * ((spec.lambda - 1.0) * t * t / 2.0 + (2.0 - spec.lambda) * t)
        }
        PenaltyFamily::Scad => {
            let a = spec.lambda;
            if t <= rho {
                rho * t
            } else if t <= a * rho {
                (2.0 * a * rho * t - t * t - rho * rho) / (2.0 * (a - 1.0))
            } else {
                (a + 1.0) * rho * rho / 2.0
            }
        }
    }
}

/// First and second derivatives of `t -> P_lambda(t, rho)` at `t > 0`.
pub fn penalty_derivatives(spec: &PenaltySpec, t: f64) -> (f64, f64) {
    let rho = spec.rho;
    if rho == 0.0 {
        return (0.0, 0.0);
    }
    let l = spec.lambda;
    match spec.family {
        PenaltyFamily::Lasso => (rho, 0.0),
        PenaltyFamily::Ridge => (2.0 * rho * t, 2.0 * rho),
        PenaltyFamily::Power => (rho * l * t.powf(l - 1.0), rho * l * (l - 1.0) * t.powf(l - 2.0)),
        PenaltyFamily::ElasticNet => (rho * ((l - 1.0) * t + 2.0 - l), rho * (l - 1.0)),
        PenaltyFamily::Scad => {
            if t <= rho {
                (rho, 0.0)
            } else if t <= l * rho {
                ((l * rho - t) / (l - 1.0), -1.0 / (l - 1.0))
            } else {
                (0.0, 0.0)
            }
        }
    }
}

/// Minimizer over `beta` of `(w / 2) (beta - z)^2 + P_lambda(|beta|, rho)`.
pub fn threshold_update(spec: &PenaltySpec, z: f64, quad_weight: f64) -> f64 {
    debug_assert!(quad_weight > 0.0);
    if spec.rho == 0.0 {
        return z;
    }
    let s = z.signum();
    let t = z.abs();
    let w = quad_weight;
    let rho = spec.rho;
    let mag = match spec.family {
        PenaltyFamily::Lasso => (t - rho / w).max(0.0),
        PenaltyFamily::Ridge => w * t / (w + 2.0 * rho),
        PenaltyFamily::ElasticNet => {
            let l = spec.lambda;
            (w * t - rho * (2.0 - l)).max(0.0) / (w + rho * (l - 1.0))
        }
        PenaltyFamily::Power => power_threshold(t, w, rho, spec.lambda),
        PenaltyFamily::Scad => scad_threshold(t, w, rho, spec.lambda),
    };
    if mag == 0.0 {
        0.0
    } else {
        s * mag
    }
}

fn objective_1d(spec_value: impl Fn(f64) -> f64, t: f64, z: f64, w: f64) -> f64 {
    0.5 * w * (t - z) * (t - z) + spec_value(t)
}

/// Power family with `lambda` in (0, 1) ∪ (1, 2), for `z >= 0`. The minimizer
/// lies in `[0, z]`; the stationarity residual `w (t - z) + rho lambda t^(lambda-1)`
/// is monotone for `lambda > 1` and convex for `lambda < 1`.
fn power_threshold(z: f64, w: f64, rho: f64, lambda: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let grad = |t: f64| w * (t - z) + rho * lambda * t.powf(lambda - 1.0);
    let value = |t: f64| objective_1d(|u| rho * u.powf(lambda), t, z, w);
    if lambda > 1.0 {
        return bisect(grad, 0.0, z);
    }
    // Nonconvex case: the residual is convex with minimum at `t_min`; an
    // interior local minimum exists only when it dips below zero before `z`.
    let t_min = (rho * lambda * (1.0 - lambda) / w).powf(1.0 / (2.0 - lambda));
    if t_min >= z || grad(t_min) >= 0.0 {
        return 0.0;
    }
    let root = bisect(grad, t_min, z);
    if value(root) < value(0.0) {
        root
    } else {
        0.0
    }
}

/// Largest root of an increasing function on `[lo, hi]` with `f(lo) < 0 <= f(hi)`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// SCAD for `z >= 0`: minimize separately on each of the three pieces and keep
/// the best candidate.
fn scad_threshold(z: f64, w: f64, rho: f64, a: f64) -> f64 {
    let spec = PenaltySpec {
        family: PenaltyFamily::Scad,
        rho,
        lambda: a,
    };
    let value = |t: f64| objective_1d(|u| penalty_value(&spec, u), t, z, w);

    let mut candidates = vec![(z - rho / w).clamp(0.0, rho), z.max(a * rho)];
    let curvature = w * (a - 1.0) - 1.0;
    if curvature > 0.0 {
        candidates.push(((w * z * (a - 1.0) - a * rho) / curvature).clamp(rho, a * rho));
    } else {
        candidates.extend([rho, a * rho]);
    }
    let mut best = 0.0;
    let mut best_val = value(0.0);
    for t in candidates {
        let v = value(t);
        if v < best_val || (v == best_val && t < best) {
            best = t;
            best_val = v;
        }
    }
    best
}
