use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-positive conductivity {kappa} in element {element} (mean temperature {theta})")]
    NonPositiveConductivity {
        element: usize,
        theta: f64,
        kappa: f64,
    },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("sensor position {0} does not coincide with a mesh node")]
    SensorNotOnMesh(f64),

    #[error("relative perturbation undefined: parameter {0} is zero")]
    ZeroParameter(usize),

    #[error("parameter vector outside the prior support: {0}")]
    OutsideSupport(String),

    #[error("covariance matrix is not symmetric positive-definite")]
    NotPositiveDefinite,

    #[error("undefined Geweke ratio: {0} is zero")]
    UndefinedRatio(&'static str),

    #[error("empty chain: {0}")]
    EmptyChain(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{0}: no rows")]
    NoRows(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveConductivity { .. }
                | Error::SingularSystem(_)
                | Error::NotPositiveDefinite
                | Error::EmptyChain(_)
                | Error::UndefinedRatio(_)
        )
    }
}
