use serde::{Deserialize, Serialize};

use super::Parametrization;
use crate::conductivity::TemperatureRange;
use crate::{Error, Result};

/// Prior densities over the parameter vector, all truncated to positive κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    /// Density 1 where κ(θ) > 0 on the range, 0 elsewhere.
    TruncatedUniformImproper { range: TemperatureRange },
    /// Independent normals `N(μₙ, σₙ²)` restricted to positive κ.
    TruncatedNormal {
        mu: Vec<f64>,
        sigma: Vec<f64>,
        range: TemperatureRange,
    },
    /// Gaussian smoothness prior on consecutive differences,
    /// `Q = Z·P ~ N(Q̄, γ² I)`, restricted to `min(P) > 0`.
    Gmrf { q_bar: Vec<f64>, gamma2: f64 },
}

impl Prior {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Prior::TruncatedUniformImproper { .. } => Ok(()),
            Prior::TruncatedNormal { mu, sigma, .. } => {
                if mu.len() != dim || sigma.len() != dim {
                    return Err(Error::InvalidConfig(format!(
                        "normal prior has {} means and {} deviations for {dim} parameters",
                        mu.len(),
                        sigma.len()
                    )));
                }
                if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(Error::InvalidConfig(
                        "normal prior deviations must be positive".into(),
                    ));
                }
                Ok(())
            }
            Prior::Gmrf { q_bar, gamma2 } => {
                if q_bar.len() + 1 != dim {
                    return Err(Error::InvalidConfig(format!(
                        "GMRF prior has {} reference differences for {dim} parameters",
                        q_bar.len()
                    )));
                }
                if !(*gamma2 > 0.0 && gamma2.is_finite()) {
                    return Err(Error::InvalidConfig("GMRF gamma2 must be positive".into()));
                }
                Ok(())
            }
        }
    }

    /// Unnormalized log density; `-∞` outside the support.
    pub fn log_prior(&self, parametrization: &Parametrization, p: &[f64]) -> f64 {
        match self {
            Prior::TruncatedUniformImproper { range } => {
                if parametrization.is_positive(p, *range) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::TruncatedNormal { mu, sigma, range } => {
                if !parametrization.is_positive(p, *range) {
                    return f64::NEG_INFINITY;
                }
                -0.5 * p
                    .iter()
                    .zip(mu)
                    .zip(sigma)
                    .map(|((x, m), s)| ((x - m) / s).powi(2))
                    .sum::<f64>()
            }
            Prior::Gmrf { q_bar, gamma2 } => {
                if !p.iter().all(|&v| v > 0.0 && v.is_finite()) {
                    return f64::NEG_INFINITY;
                }
                let ss: f64 = differences(p)
                    .zip(q_bar)
                    .map(|(q, qb)| (q - qb).powi(2))
                    .sum();
                -ss / (2.0 * gamma2)
            }
        }
    }
}

/// `Z·P`: consecutive differences `P[i+1] - P[i]`.
pub fn differences(p: &[f64]) -> impl Iterator<Item = f64> + '_ {
    p.windows(2).map(|w| w[1] - w[0])
}
