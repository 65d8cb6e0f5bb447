use serde::{Deserialize, Serialize};

use crate::conductivity::{
    cubic_is_positive_on, piecewise_is_positive, values_to_coefficients, Conductivity,
    ConductivityModel, Cubic, CubicNodes, PiecewiseLinear, TemperatureRange,
};
use crate::{Error, Result};

/// How a parameter vector maps to κ(θ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parametrization {
    /// `P = (C₁, C₂, C₃, C₄)`.
    Coefficients,
    /// `P = (κ₁..κ₄)` at four equally spaced temperatures.
    ConductivityValues { theta_nodes: [f64; 4] },
    /// `P = (κ₁..κ_N)` at the knots of a piecewise-linear interpolant.
    Piecewise { theta_grid: Vec<f64> },
}

impl Parametrization {
    pub fn conductivity_values(range: TemperatureRange) -> Self {
        let g = range.linspace(4);
        Self::ConductivityValues {
            theta_nodes: [g[0], g[1], g[2], g[3]],
        }
    }

    pub fn piecewise(range: TemperatureRange, n: usize) -> Self {
        Self::Piecewise {
            theta_grid: range.linspace(n),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Coefficients | Self::ConductivityValues { .. } => 4,
            Self::Piecewise { theta_grid } => theta_grid.len(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Coefficients => "coefficients",
            Self::ConductivityValues { .. } => "conductivity_values",
            Self::Piecewise { .. } => "piecewise",
        }
    }

    /// Names of the parameters, used as CSV headers.
    pub fn parameter_names(&self) -> Vec<String> {
        match self {
            Self::Coefficients => (1..=4).map(|i| format!("C{i}")).collect(),
            _ => (1..=self.dim()).map(|i| format!("kappa{i}")).collect(),
        }
    }

    fn check_dim(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.dim() {
            return Err(Error::InvalidConfig(format!(
                "{} parametrization expects {} parameters, got {}",
                self.tag(),
                self.dim(),
                values.len()
            )));
        }
        Ok(())
    }

    /// Evaluator for κ(θ) at the given parameters.
    pub fn kappa<'a>(&'a self, values: &'a [f64]) -> Result<ParamKappa<'a>> {
        self.check_dim(values)?;
        Ok(match self {
            Self::Coefficients => ParamKappa::Cubic(Cubic::new(to4(values))),
            Self::ConductivityValues { theta_nodes } => ParamKappa::Cubic(Cubic::new(
                values_to_coefficients(*theta_nodes, to4(values))?,
            )),
            Self::Piecewise { theta_grid } => ParamKappa::Piecewise {
                grid: theta_grid,
                values,
                inv_step: uniform_inv_step(theta_grid),
            },
        })
    }

    /// Cubic coefficients implied by the parameters, for the cubic
    /// parametrizations.
    pub fn coefficients(&self, values: &[f64]) -> Option<[f64; 4]> {
        match self.kappa(values).ok()? {
            ParamKappa::Cubic(c) => Some(c.coefficients),
            ParamKappa::Piecewise { .. } => None,
        }
    }

    pub fn to_model(&self, values: &[f64]) -> Result<ConductivityModel> {
        self.check_dim(values)?;
        Ok(match self {
            Self::Coefficients => ConductivityModel::cubic(to4(values)),
            Self::ConductivityValues { theta_nodes } => {
                ConductivityModel::CubicByValues(CubicNodes {
                    theta_nodes: *theta_nodes,
                    kappa_nodes: to4(values),
                })
            }
            Self::Piecewise { theta_grid } => ConductivityModel::PiecewiseLinear(
                PiecewiseLinear::new(theta_grid.clone(), values.to_vec())?,
            ),
        })
    }

    /// Parameters that represent `model` in this parametrization: the
    /// coefficients, or κ sampled at the nodes.
    pub fn parameters_of(&self, model: &ConductivityModel) -> Result<Vec<f64>> {
        let kappa = model.prepare()?;
        Ok(match self {
            Self::Coefficients => match model {
                ConductivityModel::CubicByCoefficients(c) => c.coefficients.to_vec(),
                ConductivityModel::CubicByValues(n) => n.to_cubic()?.coefficients.to_vec(),
                ConductivityModel::PiecewiseLinear(_) => {
                    return Err(Error::InvalidConfig(
                        "a piecewise model has no cubic coefficients".into(),
                    ))
                }
            },
            Self::ConductivityValues { theta_nodes } => {
                theta_nodes.iter().map(|&t| kappa.kappa(t)).collect()
            }
            Self::Piecewise { theta_grid } => theta_grid.iter().map(|&t| kappa.kappa(t)).collect(),
        })
    }

    /// Positivity of κ(θ) over the range: membership in Φ for the cubic
    /// parametrizations, `min(P) > 0` for the piecewise one.
    pub fn is_positive(&self, values: &[f64], range: TemperatureRange) -> bool {
        if values.len() != self.dim() || values.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Self::Coefficients => cubic_is_positive_on(to4(values), range),
            Self::ConductivityValues { theta_nodes } => {
                values_to_coefficients(*theta_nodes, to4(values))
                    .is_ok_and(|c| cubic_is_positive_on(c, range))
            }
            Self::Piecewise { .. } => piecewise_is_positive(values),
        }
    }
}

/// `1/h` when the grid is equally spaced (to a relative 1e-9), else 0.
fn uniform_inv_step(grid: &[f64]) -> f64 {
    let n = grid.len();
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    let uniform = grid
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
    if uniform {
        1.0 / h
    } else {
        0.0
    }
}

fn to4(v: &[f64]) -> [f64; 4] {
    [v[0], v[1], v[2], v[3]]
}

/// κ(θ) for a parameter vector, borrowing the piecewise grid and values.
#[derive(Debug, Clone, Copy)]
pub enum ParamKappa<'a> {
    Cubic(Cubic),
    Piecewise {
        grid: &'a [f64],
        values: &'a [f64],
        /// Nonzero for equally spaced knots, which allows direct indexing.
        inv_step: f64,
    },
}

impl Conductivity for ParamKappa<'_> {
    #[inline]
    fn kappa(&self, theta: f64) -> f64 {
        match self {
            ParamKappa::Cubic(c) => c.kappa(theta),
            ParamKappa::Piecewise {
                grid,
                values,
                inv_step,
            } => {
                let last = grid.len() - 1;
                if theta <= grid[0] {
                    return values[0];
                }
                if theta >= grid[last] {
                    return values[last];
                }
                let lo = if *inv_step > 0.0 {
                    let mut i = (((theta - grid[0]) * inv_step) as usize).min(last - 1);
                    // the computed index can be off by one near a knot
                    if theta < grid[i] {
                        i -= 1;
                    } else if theta >= grid[i + 1] && i + 1 < last {
                        i += 1;
                    }
                    i
                } else {
                    grid.partition_point(|&x| x <= theta) - 1
                };
                let hi = lo + 1;
                let w = (theta - grid[lo]) / (grid[hi] - grid[lo]);
                values[lo] + w * (values[hi] - values[lo])
            }
        }
    }
}

/// A parameter vector tagged with its parametrization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub parametrization: Parametrization,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, parametrization: Parametrization) -> Result<Self> {
        parametrization.check_dim(&values)?;
        Ok(Self {
            values,
            parametrization,
        })
    }

    pub fn to_model(&self) -> Result<ConductivityModel> {
        self.parametrization.to_model(&self.values)
    }
}
