use thiserror::Error;

/// Errors raised by the library. Variant names are part of the CLI contract:
/// `tailspec estimate` prints [`Error::name`] on failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column {column} of the loading matrix has zero l1-norm")]
    ZeroColumn { column: usize },

    #[error("tail index must be positive, got {0}")]
    InvalidAlpha(f64),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no tail acceptance within {max_trials} trials (threshold {threshold})")]
    MaxTrialsExceeded { max_trials: u64, threshold: f64 },

    #[error("the tilted worst-case latent law needs m = 2, got m = {0}")]
    WorstCaseDimension(usize),

    #[error("transport solver failed: {0}")]
    SolverFailure(String),

    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("matrix is numerically singular (pivot or determinant {value:e} below {tol:e})")]
    NearSingular { value: f64, tol: f64 },

    #[error("regression design is degenerate: all abscissae are equal")]
    DegenerateDesign,

    #[error("no sample exceeds the threshold {threshold}")]
    NoExceedances { threshold: f64 },

    #[error("estimating equation has no solution: tail fraction {fraction} >= r_hat {r_hat}")]
    NoSolution { fraction: f64, r_hat: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("experiment aborted: every replicate failed for {estimator} at n = {n}")]
    ExperimentAborted { estimator: String, n: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable variant name, used in CLI messages.
    pub fn name(&self) -> &'static str {
        match self {
            Error::ZeroColumn { .. } => "ZeroColumn",
            Error::InvalidAlpha(_) => "InvalidAlpha",
            Error::InvalidMeasure(_) => "InvalidMeasure",
            Error::InvalidModel(_) => "InvalidModel",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::MaxTrialsExceeded { .. } => "MaxTrialsExceeded",
            Error::WorstCaseDimension(_) => "WorstCaseDimension",
            Error::SolverFailure(_) => "SolverFailure",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::NearSingular { .. } => "NearSingular",
            Error::DegenerateDesign => "DegenerateDesign",
            Error::NoExceedances { .. } => "NoExceedances",
            Error::NoSolution { .. } => "NoSolution",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::ExperimentAborted { .. } => "ExperimentAborted",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
