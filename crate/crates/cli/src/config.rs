//! Experiment configuration: JSON files, built-in presets and the
//! resolution of prior specifications against the measured temperature range.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use heatcond::conductivity::{Conductivity, ConductivityModel, TemperatureRange};
use heatcond::forward::{nondimensionalize, ForwardSolver, Mesh, PhysicalConfig};
use heatcond::inference::{differences, AdaptiveConfig, Parametrization, Prior};

pub const REFERENCE_TRUTH: [f64; 4] = [0.0810, -0.4860, 0.0918, 4.2060];

pub const PRESETS: &[(&str, &str)] = &[
    (
        "reference-forward",
        include_str!("../presets/reference-forward.json"),
    ),
    ("sens-true", include_str!("../presets/sens-true.json")),
    ("sens-ones", include_str!("../presets/sens-ones.json")),
    (
        "cubic-uniform",
        include_str!("../presets/cubic-uniform.json"),
    ),
    (
        "cubic-normal-10",
        include_str!("../presets/cubic-normal-10.json"),
    ),
    (
        "cubic-normal-1",
        include_str!("../presets/cubic-normal-1.json"),
    ),
    (
        "coeffs-uniform",
        include_str!("../presets/coeffs-uniform.json"),
    ),
    (
        "coeffs-normal-10",
        include_str!("../presets/coeffs-normal-10.json"),
    ),
    (
        "coeffs-normal-1",
        include_str!("../presets/coeffs-normal-1.json"),
    ),
    (
        "gmrf-qexact-2e-3",
        include_str!("../presets/gmrf-qexact-2e-3.json"),
    ),
    (
        "gmrf-qexact-2e-4",
        include_str!("../presets/gmrf-qexact-2e-4.json"),
    ),
    (
        "gmrf-qexact-2e-5",
        include_str!("../presets/gmrf-qexact-2e-5.json"),
    ),
    ("gmrf-q0", include_str!("../presets/gmrf-q0.json")),
    ("gmrf-qneg", include_str!("../presets/gmrf-qneg.json")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub physical: PhysicalConfig,
    pub elements: usize,
    pub sensors: Vec<f64>,
    pub truth: ConductivityModel,
    pub data: DataConfig,
    pub sensitivity: SensitivityConfig,
    pub inference: InferenceConfig,
    /// Output directory, relative to the output root.
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            physical: PhysicalConfig::default(),
            elements: 5,
            sensors: vec![0.0, 1.0],
            truth: ConductivityModel::cubic(REFERENCE_TRUTH),
            data: DataConfig::default(),
            sensitivity: SensitivityConfig::default(),
            inference: InferenceConfig::default(),
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub seed: u64,
    /// Multiplies the standard 1% noise; 0 gives noiseless data.
    pub noise_scale: f64,
    /// Read measurements from this CSV instead of simulating them.
    pub file: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            noise_scale: 1.0,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamSpec {
    Coefficients,
    ConductivityValues,
    Piecewise { n: usize },
}

impl ParamSpec {
    pub fn resolve(&self, range: TemperatureRange) -> anyhow::Result<Parametrization> {
        Ok(match self {
            ParamSpec::Coefficients => Parametrization::Coefficients,
            ParamSpec::ConductivityValues => Parametrization::conductivity_values(range),
            ParamSpec::Piecewise { n } => {
                if *n < 2 {
                    bail!("piecewise parametrization needs at least 2 knots, got {n}");
                }
                Parametrization::piecewise(range, *n)
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ParamSpec::Coefficients | ParamSpec::ConductivityValues => 4,
            ParamSpec::Piecewise { n } => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceSpec {
    /// `"truth"`: the truth model expressed in the parametrization.
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub parametrization: ParamSpec,
    pub reference: ReferenceSpec,
    pub epsilon: f64,
    /// `|JᵀJ|` below this is reported as ill-conditioned.
    pub threshold: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            parametrization: ParamSpec::ConductivityValues,
            reference: ReferenceSpec::Named("truth".into()),
            epsilon: heatcond::sensitivity::DEFAULT_EPSILON,
            threshold: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanSpec {
    /// `"truth_average"`: the average of the truth over the range.
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QBarSpec {
    /// `"exact"`, `"zero"` or `"negated_exact"`.
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform,
    /// Standard deviation `rel_std · μ` for every parameter.
    Normal {
        mean: MeanSpec,
        rel_std: f64,
    },
    Gmrf {
        gamma2: f64,
        q_bar: QBarSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Constant(f64),
    Values(Vec<f64>),
    /// `"pilot_cubic"`: posterior mean of a short cubic run with a uniform
    /// prior, expressed in the target parametrization.
    Named(String),
}

/// Budgets used with `--scale desk` instead of dividing by ten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskBudgets {
    pub adaptive_steps: usize,
    pub mh_steps: usize,
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub parametrization: ParamSpec,
    pub prior: PriorSpec,
    pub initial: InitialSpec,
    pub adaptive: AdaptiveConfig,
    pub mh_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub chains: usize,
    /// Start the fixed-proposal phase from the last adaptive state rather
    /// than from the initial guess.
    pub mh_from_adapted: bool,
    /// Adaptive steps of the pilot run behind `"pilot_cubic"`.
    pub pilot_steps: usize,
    pub band_points: usize,
    pub level: f64,
    pub desk: Option<DeskBudgets>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            parametrization: ParamSpec::ConductivityValues,
            prior: PriorSpec::Uniform,
            initial: InitialSpec::Constant(1.0),
            adaptive: AdaptiveConfig::default(),
            mh_steps: 5000,
            burn_in: 1000,
            seed: 1,
            chains: 1,
            mh_from_adapted: false,
            pilot_steps: 10_000,
            band_points: 200,
            level: 0.99,
            desk: None,
        }
    }
}

impl InferenceConfig {
    pub fn apply_desk_scale(&mut self) {
        match self.desk.take() {
            Some(d) => {
                self.adaptive.steps = d.adaptive_steps;
                self.mh_steps = d.mh_steps;
                self.burn_in = d.burn_in;
            }
            None => {
                self.adaptive.steps = (self.adaptive.steps / 10).max(1);
                self.mh_steps = (self.mh_steps / 10).max(1);
                self.burn_in /= 10;
            }
        }
        self.adaptive.discard = self.adaptive.discard.map(|d| d / 10);
        self.adaptive.warmup = self.adaptive.warmup.map(|w| (w / 10).max(1));
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> anyhow::Result<Self> {
        let Some((_, text)) = PRESETS.iter().find(|(n, _)| *n == name) else {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            bail!("unknown preset {name:?}; available: {}", names.join(", "));
        };
        let mut cfg: Self = serde_json::from_str(text).with_context(|| format!("preset {name}"))?;
        cfg.name = name.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        if cfg.name == "custom" {
            if let Some(stem) = path.file_stem() {
                cfg.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    /// Checks everything that does not depend on the measurements.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.physical.validate()?;
        if self.elements == 0 {
            bail!("elements must be positive");
        }
        if self.sensors.is_empty() {
            bail!("at least one sensor is required");
        }
        self.truth.validate()?;
        if !(self.data.noise_scale >= 0.0 && self.data.noise_scale.is_finite()) {
            bail!("noise_scale must be non-negative");
        }
        let inf = &self.inference;
        let dim = inf.parametrization.dim();
        if let ParamSpec::Piecewise { n } = inf.parametrization {
            if n < 2 {
                bail!("piecewise parametrization needs at least 2 knots, got {n}");
            }
        }
        match &inf.prior {
            PriorSpec::Uniform => {}
            PriorSpec::Normal { mean, rel_std } => {
                if !(*rel_std > 0.0 && rel_std.is_finite()) {
                    bail!("normal prior rel_std must be positive");
                }
                match mean {
                    MeanSpec::Named(s) if s == "truth_average" => {}
                    MeanSpec::Named(s) => {
                        bail!("unknown prior mean {s:?}; expected \"truth_average\" or a list")
                    }
                    MeanSpec::Values(v) if v.len() != dim => {
                        bail!(
                            "normal prior mean has {} values for {dim} parameters",
                            v.len()
                        )
                    }
                    MeanSpec::Values(_) => {}
                }
            }
            PriorSpec::Gmrf { gamma2, q_bar } => {
                if !matches!(inf.parametrization, ParamSpec::Piecewise { .. }) {
                    bail!("the GMRF prior requires the piecewise parametrization");
                }
                if !(*gamma2 > 0.0 && gamma2.is_finite()) {
                    bail!("GMRF gamma2 must be positive");
                }
                match q_bar {
                    QBarSpec::Named(s)
                        if ["exact", "zero", "negated_exact"].contains(&s.as_str()) => {}
                    QBarSpec::Named(s) => bail!("unknown q_bar {s:?}"),
                    QBarSpec::Values(v) if v.len() + 1 != dim => {
                        bail!("q_bar has {} values for {dim} parameters", v.len())
                    }
                    QBarSpec::Values(_) => {}
                }
            }
        }
        match &inf.initial {
            InitialSpec::Values(v) if v.len() != dim => {
                bail!("initial guess has {} values for {dim} parameters", v.len())
            }
            InitialSpec::Named(s) if s != "pilot_cubic" => {
                bail!("unknown initial guess {s:?}; expected a number, a list or \"pilot_cubic\"")
            }
            InitialSpec::Named(_) if inf.pilot_steps < 2 => bail!("pilot_steps must be at least 2"),
            _ => {}
        }
        if inf.adaptive.steps == 0 || inf.mh_steps == 0 {
            bail!("sampler budgets must be positive");
        }
        if inf.burn_in >= inf.mh_steps {
            bail!(
                "burn_in {} must be smaller than mh_steps {}",
                inf.burn_in,
                inf.mh_steps
            );
        }
        if inf.chains == 0 {
            bail!("chains must be positive");
        }
        if inf.band_points < 2 {
            bail!("band_points must be at least 2");
        }
        if !(inf.level > 0.0 && inf.level < 1.0) {
            bail!("credible level must lie in (0, 1)");
        }
        if let ReferenceSpec::Named(s) = &self.sensitivity.reference {
            if s != "truth" {
                bail!("unknown sensitivity reference {s:?}; expected \"truth\" or a list");
            }
        }
        Ok(())
    }

    pub fn solver(&self) -> anyhow::Result<ForwardSolver> {
        let (problem, grid) = nondimensionalize(&self.physical)?;
        Ok(ForwardSolver::new(
            problem,
            Mesh::uniform(self.elements)?,
            grid,
            &self.sensors,
        )?)
    }

    /// Prior for the given parametrization over the measured range.
    pub fn prior(&self, param: &Parametrization, range: TemperatureRange) -> anyhow::Result<Prior> {
        let dim = param.dim();
        Ok(match &self.inference.prior {
            PriorSpec::Uniform => Prior::TruncatedUniformImproper { range },
            PriorSpec::Normal { mean, rel_std } => {
                let (mu, scale) = match mean {
                    MeanSpec::Values(v) => {
                        (v.clone(), v.iter().fold(0.0_f64, |a, x| a.max(x.abs())))
                    }
                    MeanSpec::Named(_) => {
                        let avg = self.truth_average(range)?;
                        let mu = match param {
                            Parametrization::Coefficients => vec![0.0, 0.0, 0.0, avg],
                            _ => vec![avg; dim],
                        };
                        (mu, avg)
                    }
                };
                Prior::TruncatedNormal {
                    mu,
                    sigma: vec![rel_std * scale; dim],
                    range,
                }
            }
            PriorSpec::Gmrf { gamma2, q_bar } => {
                let q = match q_bar {
                    QBarSpec::Values(v) => v.clone(),
                    QBarSpec::Named(s) => {
                        let exact: Vec<f64> =
                            differences(&param.parameters_of(&self.truth)?).collect();
                        match s.as_str() {
                            "exact" => exact,
                            "zero" => vec![0.0; dim - 1],
                            _ => exact.iter().map(|v| -v).collect(),
                        }
                    }
                };
                Prior::Gmrf {
                    q_bar: q,
                    gamma2: *gamma2,
                }
            }
        })
    }

    /// Mean of the truth model over the range.
    pub fn truth_average(&self, range: TemperatureRange) -> anyhow::Result<f64> {
        match &self.truth {
            ConductivityModel::CubicByCoefficients(c) => Ok(c.average_over(range)),
            ConductivityModel::CubicByValues(n) => Ok(n.to_cubic()?.average_over(range)),
            ConductivityModel::PiecewiseLinear(p) => {
                let g = range.linspace(10_001);
                let h = range.width() / 10_000.0;
                let v: Vec<f64> = g.iter().map(|&t| p.kappa(t)).collect();
                let trap = h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]));
                Ok(trap / range.width())
            }
        }
    }

    /// Explicit initial guess; `None` for the pilot-run guess.
    pub fn initial(&self, dim: usize) -> Option<Vec<f64>> {
        match &self.inference.initial {
            InitialSpec::Constant(c) => Some(vec![*c; dim]),
            InitialSpec::Values(v) => Some(v.clone()),
            InitialSpec::Named(_) => None,
        }
    }
}
