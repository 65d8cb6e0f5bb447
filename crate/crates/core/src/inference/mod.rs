//! Priors, likelihood and the Metropolis-Hastings samplers.

mod likelihood;
mod parametrization;
mod prior;
pub mod sampler;

pub use likelihood::{Likelihood, LogDensity, Posterior};
pub use parametrization::{ParamKappa, ParameterVector, Parametrization};
pub use prior::{differences, Prior};
pub use sampler::{run_adaptive, run_mh, Adapted, AdaptiveConfig, Chain};
