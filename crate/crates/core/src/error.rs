use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix has negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),
    #[error("ellipticity violated: lambda_min(a) = {lambda_min:e} < lambda^2 = {lambda_sq:e}")]
    EllipticityViolated { lambda_min: f64, lambda_sq: f64 },
    #[error("adaptive quadrature did not reach tolerance (last relative change {0:e})")]
    QuadratureNotConverged(f64),
    #[error("controllability Gramian is singular at t = {0}")]
    SingularGramian(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("particle counts differ ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("only uniform weights are supported by exact assignment")]
    UnsupportedWeights,
    #[error("covariance matrix is singular")]
    SingularCovariance,
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("too few particles ({n}) for dimension {dim}")]
    TooFewParticles { n: usize, dim: usize },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },
    #[error("noise streams or grids do not match: {0}")]
    StreamMismatch(String),
    #[error("law flow covers {available} but {requested} was requested")]
    FlowHorizonTooShort { available: f64, requested: f64 },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("model has no Hamiltonian structure")]
    MissingStructure,
    #[error("Kalman rank condition fails for (A, M)")]
    RankConditionFails,
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("estimator degenerate: {0}")]
    EstimatorDegenerate(String),
    #[error("ensemble not stationary: statistic {statistic:e} above floor {floor:e}")]
    NotConverged { statistic: f64, floor: f64 },

    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("experiment check failed: {0}")]
    ExperimentFailed(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
