use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    /// `‖y⁽¹⁾σ_z‖_op ≥ 1`: the inverse of `Id − y⁽¹⁾σ_z` is no longer guaranteed.
    #[error("operator norm {norm} of the (m×d)-coupling is not below 1")]
    Singular { norm: f64 },

    #[error("power iteration did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    MaxIterations { iterations: usize, last_step: f64 },

    #[error("derivative order {requested} exceeds the supported order {supported}")]
    OrderExceeded { requested: usize, supported: usize },

    #[error("coefficient `{0}` returned a non-finite value")]
    NonFiniteCoefficient(&'static str),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidShape(_) => "invalid_shape",
            Error::NonFinite(_) => "non_finite",
            Error::Singular { .. } => "singular",
            Error::NonConvergence { .. } => "non_convergence",
            Error::MaxIterations { .. } => "max_iterations",
            Error::OrderExceeded { .. } => "order_exceeded",
            Error::NonFiniteCoefficient(_) => "non_finite_coefficient",
            Error::UnknownProblem(_) => "unknown_problem",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config(_) => "config",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
