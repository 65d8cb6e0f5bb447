//! Bayesian estimation of a temperature-dependent thermal conductivity curve
//! from noisy transient temperature measurements.
//!
//! The crate is organised around the pipeline:
//!
//! * [`forward`]: dimensionless 1D transient heat conduction, linear finite
//!   elements in space and backward Euler in time.
//! * [`conductivity`]: cubic (by coefficients or by values) and piecewise
//!   linear conductivity models with positivity checks.
//! * [`measurements`]: synthetic sensor data and its CSV persistence.
//! * [`sensitivity`]: central-difference sensitivity matrix and |JᵀJ|.
//! * [`inference`]: priors, Gaussian likelihood and the adaptive
//!   Metropolis-Hastings sampler.
//! * [`diagnostics`]: Geweke test, posterior summaries and credible bands.

pub mod conductivity;
pub mod diagnostics;
pub mod error;
pub mod forward;
pub mod inference;
pub mod linalg;
pub mod measurements;
pub mod sensitivity;

pub use error::{Error, Result};
