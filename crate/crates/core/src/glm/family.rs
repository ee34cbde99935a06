use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Smallest variance used in IRLS weights and working responses.
pub(crate) const MIN_VARIANCE: f64 = 1e-10;

/// Exponential families with their canonical links (identity, logit, log).
///
/// With a canonical link `theta = eta`, so `theta'(eta) = 1`, `theta''(eta) = 0`
/// and `mu'(eta) = b''(theta) = V(mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmFamily {
    Normal,
    Bernoulli,
    Poisson,
}

impl GlmFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Bernoulli => "bernoulli",
            Self::Poisson => "poisson",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "normal" | "gaussian" => Ok(Self::Normal),
            "bernoulli" | "binomial" | "logistic" => Ok(Self::Bernoulli),
            "poisson" => Ok(Self::Poisson),
            other => Err(Error::Domain(format!("unknown family {other:?}"))),
        }
    }

    /// Bernoulli and Poisson fix `phi = 1`.
    pub fn dispersion_fixed(self) -> bool {
        !matches!(self, Self::Normal)
    }

    /// Inverse link `mu(eta)`.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Self::Normal => eta,
            Self::Bernoulli => logistic(eta),
            Self::Poisson => eta.exp(),
        }
    }

    /// Link `g(mu)`.
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Self::Normal => mu,
            Self::Bernoulli => (mu / (1.0 - mu)).ln(),
            Self::Poisson => mu.ln(),
        }
    }

    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Self::Normal => 1.0,
            Self::Bernoulli => mu * (1.0 - mu),
            Self::Poisson => mu,
        }
    }

    /// `d mu / d eta`.
    pub fn mu_prime(self, eta: f64) -> f64 {
        self.variance(self.mean(eta))
    }

    /// Natural parameter; canonical links make it the identity.
    pub fn theta(self, eta: f64) -> f64 {
        eta
    }

    /// Cumulant function `b(theta)`.
    pub fn cumulant(self, theta: f64) -> f64 {
        match self {
            Self::Normal => 0.5 * theta * theta,
            Self::Bernoulli => softplus(theta),
            Self::Poisson => theta.exp(),
        }
    }

    /// `c(y, phi)`. Bernoulli has no data term; Poisson keeps `-log y!`.
    pub fn base_measure(self, y: f64, phi: f64) -> f64 {
        match self {
            Self::Normal => -0.5 * y * y / phi - 0.5 * (2.0 * std::f64::consts::PI * phi).ln(),
            Self::Bernoulli => 0.0,
            Self::Poisson => -ln_gamma(y + 1.0),
        }
    }

    /// `[y theta - b(theta)] / a(phi) + c(y, phi)` with `a(phi) = phi`.
    pub fn log_density(self, y: f64, eta: f64, phi: f64) -> f64 {
        let theta = self.theta(eta);
        (y * theta - self.cumulant(theta)) / phi + self.base_measure(y, phi)
    }

    pub fn validate_response(self, y: &[f64]) -> Result<()> {
        for (i, &v) in y.iter().enumerate() {
            let ok = match self {
                Self::Normal => v.is_finite(),
                Self::Bernoulli => v == 0.0 || v == 1.0,
                Self::Poisson => v.is_finite() && v >= 0.0,
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "response {} = {v} is invalid for the {} family",
                    i + 1,
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for GlmFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log-likelihood `sum_i [y_i theta_i - b(theta_i)] / a(phi) + sum_i c(y_i, phi)`.
pub fn log_likelihood(family: GlmFamily, y: &[f64], eta: &[f64], phi: f64) -> Result<f64> {
    if y.len() != eta.len() {
        return Err(Error::Domain(format!(
            "{} responses but {} linear predictors",
            y.len(),
            eta.len()
        )));
    }
    if let Some(i) = eta.iter().position(|e| !e.is_finite()) {
        return Err(Error::Numeric(format!("linear predictor {} is {}", i + 1, eta[i])));
    }
    Ok(y.iter()
        .zip(eta)
        .map(|(&yi, &ei)| family.log_density(yi, ei, phi))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglik_examples() {
        let y = [0.3, -1.2, 2.0];
        let ll = log_likelihood(GlmFamily::Normal, &y, &y, 1.0).unwrap();
        assert!((ll + 1.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);

        let ll = log_likelihood(GlmFamily::Bernoulli, &[0.0, 1.0, 1.0, 0.0], &[0.0; 4], 1.0).unwrap();
        assert!((ll - 4.0 * 0.5f64.ln()).abs() < 1e-12);

        let ll = log_likelihood(GlmFamily::Poisson, &[1.0], &[0.0], 1.0).unwrap();
        assert!((ll + 1.0).abs() < 1e-12);

        assert!(log_likelihood(GlmFamily::Normal, &[1.0], &[f64::NAN], 1.0).is_err());
        assert!(log_likelihood(GlmFamily::Normal, &[1.0], &[], 1.0).is_err());
    }

    #[test]
    fn mean_is_cumulant_derivative() {
        for family in [GlmFamily::Normal, GlmFamily::Bernoulli, GlmFamily::Poisson] {
            for &eta in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
                let h = 1e-5;
                let db = (family.cumulant(eta + h) - family.cumulant(eta - h)) / (2.0 * h);
                assert!((db - family.mean(eta)).abs() < 1e-8);
                let d2b = (family.cumulant(eta + h) - 2.0 * family.cumulant(eta) + family.cumulant(eta - h)) / (h * h);
                assert!((d2b - family.variance(family.mean(eta))).abs() < 1e-4);
                assert!((family.link(family.mean(eta)) - eta).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bernoulli_is_stable_at_extremes() {
        let ll = GlmFamily::Bernoulli.log_density(1.0, 800.0, 1.0);
        assert!(ll.is_finite() && ll <= 0.0);
        let ll = GlmFamily::Bernoulli.log_density(0.0, -800.0, 1.0);
        assert!(ll.is_finite() && ll <= 0.0);
    }

    #[test]
    fn response_validation() {
        assert!(GlmFamily::Bernoulli.validate_response(&[0.0, 1.0]).is_ok());
        assert!(GlmFamily::Bernoulli.validate_response(&[0.5]).is_err());
        assert!(GlmFamily::Poisson.validate_response(&[-1.0]).is_err());
        assert_eq!(GlmFamily::from_name("binomial").unwrap(), GlmFamily::Bernoulli);
    }
}
