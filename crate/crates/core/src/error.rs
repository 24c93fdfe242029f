use thiserror::Error;

/// Errors from the design-based estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurveyError {
    #[error("empty area sample")]
    EmptyArea,
    #[error("no households")]
    NoHouseholds,
    #[error("household size must be at least 1")]
    InvalidHouseholdSize,
    #[error("records belong to more than one area ({0} and {1})")]
    MixedAreas(String, String),
    #[error("survey weight must be positive and finite (person {0})")]
    InvalidWeight(String),
    #[error("design effect needs at least two PSUs, found {0}")]
    TooFewPsus(usize),
    #[error("degenerate variable: zero SRS variance")]
    DegenerateVariable,
    #[error("pooled proportion must lie strictly inside (0, 1), got {0}")]
    PooledProportionOutOfRange(f64),
    #[error("insufficient data for pooling: {0} poor respondents")]
    InsufficientPooling(usize),
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("dimension index {index} out of range for K = {k}")]
    DimensionOutOfRange { index: usize, k: usize },
    #[error("household {0} mixes poor and non-poor members")]
    InconsistentHousehold(String),
    #[error("non-poor person {0} has a non-zero dimensional score")]
    NonZeroScoreForNonPoor(String),
    #[error("score for person {0} outside [0, 1]")]
    ScoreOutOfRange(String),
}

/// Errors raised while building or evaluating a model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter point")]
    InvalidParameterPoint,
    #[error("parameter vector has length {got}, expected {expected}")]
    ParameterLength { expected: usize, got: usize },
    #[error("invalid model data: {0}")]
    InvalidData(String),
    #[error("sampling covariance for area {0} is not positive definite")]
    SamplingCovarianceNotPd(String),
    #[error("covariate matrix does not have full column rank")]
    RankDeficient,
    #[error("plug-in estimate for area {0} outside (0, 1)")]
    PluginOutOfRange(String),
    #[error("draws do not match the model family: {0}")]
    FamilyMismatch(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
}

/// Errors from the HMC engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("cannot initialize: no finite starting point after {0} attempts")]
    CannotInitialize(usize),
    #[error("every post-warmup transition of chain {chain} diverged (final step size {step_size:e})")]
    AllDivergent { chain: usize, step_size: f64 },
    #[error("invalid sampler configuration: {0}")]
    Config(String),
}

/// Errors from the chain diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {needed} chains, got {got}")]
    TooFewChains { needed: usize, got: usize },
    #[error("need at least 4 draws per chain, got {0}")]
    TooFewDraws(usize),
    #[error("chains have unequal lengths")]
    RaggedChains,
    #[error("degenerate: zero within-chain variance")]
    Degenerate,
    #[error("non-finite draw")]
    NonFinite,
}

/// Errors from PSIS-LOO and model comparison.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LooError {
    #[error("PSIS needs at least 50 draws, got {0}")]
    TooFewDraws(usize),
    #[error("non-finite log-likelihood entry")]
    NonFinite,
    #[error("models disagree on the number of observations ({0} vs {1})")]
    MismatchedObservations(usize, usize),
    #[error("need at least one model to compare")]
    Empty,
    #[error("numerical failure in LOO computation")]
    Numerical,
}

/// Errors from the posterior report builders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("empty draws")]
    EmptyDraws,
    #[error("invalid theta draw (area {0})")]
    InvalidThetaDraw(usize),
    #[error("missing population for area {0}")]
    MissingPopulation(String),
    #[error("area {0} is not mapped to a district")]
    UnmappedArea(String),
    #[error("missing direct estimate for district {0}")]
    MissingDistrictDirect(String),
    #[error("population for area {0} must be positive")]
    NonPositivePopulation(String),
    #[error("malformed feature collection: {0}")]
    MalformedGeoJson(String),
    #[error("family mismatch: {0}")]
    FamilyMismatch(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Errors from the synthetic survey generator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("true correlation matrix is not positive definite")]
    CorrelationNotPd,
}

/// Errors from reading and writing the pipeline's file formats.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: String, column: String },
    #[error("{path}: row {row}, column '{column}': {message}")]
    Cell { path: String, row: usize, column: String, message: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}
