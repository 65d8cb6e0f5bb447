use log::debug;

use super::{Parametrization, Prior};
use crate::forward::ForwardSolver;
use crate::measurements::MeasurementSet;
use crate::{Error, Result};

/// Gaussian likelihood with known diagonal covariance `W = diag(σⱼ²)`.
#[derive(Debug, Clone)]
pub struct Likelihood {
    solver: ForwardSolver,
    parametrization: Parametrization,
    /// Observations, sensor-major.
    observed: Vec<f64>,
    inv_sigma: Vec<f64>,
}

impl Likelihood {
    pub fn new(
        solver: ForwardSolver,
        parametrization: Parametrization,
        data: &MeasurementSet,
    ) -> Result<Self> {
        data.validate()?;
        let m = solver.grid.n_steps;
        if data.time_indices.len() != m || data.time_indices.iter().zip(1..).any(|(a, b)| *a != b) {
            return Err(Error::InvalidConfig(format!(
                "measurements must cover time steps 1..={m} of the forward model"
            )));
        }
        if data.sensor_positions.len() != solver.n_sensors()
            || data
                .sensor_positions
                .iter()
                .zip(&solver.sensor_positions)
                .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::InvalidConfig(format!(
                "measurement sensors {:?} differ from forward-model sensors {:?}",
                data.sensor_positions, solver.sensor_positions
            )));
        }
        Ok(Self {
            solver,
            parametrization,
            observed: data.observed.clone(),
            inv_sigma: data.sigma.iter().map(|s| 1.0 / s).collect(),
        })
    }

    pub fn solver(&self) -> &ForwardSolver {
        &self.solver
    }

    pub fn parametrization(&self) -> &Parametrization {
        &self.parametrization
    }

    /// `-½ Σ (Dⱼ - Tⱼ(P))² / σⱼ²`, or an error when the forward solve fails.
    pub fn try_log_likelihood(&self, p: &[f64]) -> Result<f64> {
        let kappa = self.parametrization.kappa(p)?;
        let m_total = self.solver.grid.n_steps;
        let nodes = self.solver.sensor_nodes();
        let mut ss = 0.0;
        self.solver.run(&kappa, |m, theta| {
            for (s, &node) in nodes.iter().enumerate() {
                let j = s * m_total + m;
                let r = (self.observed[j] - theta[node]) * self.inv_sigma[j];
                ss += r * r;
            }
        })?;
        Ok(-0.5 * ss)
    }

    /// As [`Likelihood::try_log_likelihood`], mapping failures to `-∞`.
    pub fn log_likelihood(&self, p: &[f64]) -> f64 {
        match self.try_log_likelihood(p) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                debug!("non-finite log-likelihood {v} at {p:?}");
                f64::NEG_INFINITY
            }
            Err(e) => {
                debug!("forward solve failed at {p:?}: {e}");
                f64::NEG_INFINITY
            }
        }
    }
}

/// Unnormalized log density of a sampler target.
pub trait LogDensity {
    fn dim(&self) -> usize;
    fn ln_density(&self, x: &[f64]) -> f64;
}

/// Prior times likelihood. The prior is evaluated first and the forward
/// solve is skipped when it is `-∞`.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub parametrization: Parametrization,
    pub prior: Prior,
    /// `None` samples the prior alone.
    pub likelihood: Option<Likelihood>,
}

impl Posterior {
    pub fn new(prior: Prior, likelihood: Likelihood) -> Result<Self> {
        let parametrization = likelihood.parametrization().clone();
        prior.validate(parametrization.dim())?;
        Ok(Self {
            parametrization,
            prior,
            likelihood: Some(likelihood),
        })
    }

    pub fn prior_only(prior: Prior, parametrization: Parametrization) -> Result<Self> {
        prior.validate(parametrization.dim())?;
        Ok(Self {
            parametrization,
            prior,
            likelihood: None,
        })
    }

    pub fn log_prior(&self, p: &[f64]) -> f64 {
        self.prior.log_prior(&self.parametrization, p)
    }
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        self.parametrization.dim()
    }

    fn ln_density(&self, p: &[f64]) -> f64 {
        let lp = self.log_prior(p);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        match &self.likelihood {
            Some(l) => lp + l.log_likelihood(p),
            None => lp,
        }
    }
}
