use thiserror::Error;

/// Which modelling assumption an error violates. Carried into the CLI's
/// machine-readable error output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Weight matrix rows sum to one.
    RowStochastic,
    /// Communication graph strongly connected.
    StronglyConnected,
    /// At least one positive self-weight.
    PositiveDiagonal,
    /// Initial beliefs strictly positive on every state.
    PositivePriors,
    /// Log-likelihoods integrable (finite) for every structure.
    IntegrableLogLikelihoods,
    /// Signal-type weights lie in (0,1) and sum to one.
    SignalWeights,
}

impl Assumption {
    pub fn id(self) -> &'static str {
        match self {
            Assumption::RowStochastic => "network.row_stochastic",
            Assumption::StronglyConnected => "network.strongly_connected",
            Assumption::PositiveDiagonal => "network.positive_diagonal",
            Assumption::PositivePriors => "beliefs.positive_priors",
            Assumption::IntegrableLogLikelihoods => "signals.integrable_log_likelihoods",
            Assumption::SignalWeights => "aggregation.signal_weights",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("weight matrix must be non-empty and square: {0}")]
    NotSquare(String),

    #[error("weight matrix entry ({row},{col}) = {value} is not in [0,1]")]
    InvalidWeight { row: usize, col: usize, value: f64 },

    #[error("weight matrix row {row} sums to {sum}, expected 1")]
    NotRowStochastic { row: usize, sum: f64 },

    #[error("communication graph is not strongly connected ({reachable} of {n} agents mutually reachable from agent 0)")]
    NotStronglyConnected { reachable: usize, n: usize },

    #[error("weight matrix has no positive diagonal entry")]
    NoPositiveDiagonal,

    #[error("invalid signal-type weights {gamma:?}: {reason}")]
    InvalidGamma { gamma: Vec<f64>, reason: String },

    #[error("stationary distribution did not converge (residual {residual:e})")]
    ConvergenceFailure { residual: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid hypothesis space: {0}")]
    InvalidHypotheses(String),

    #[error("invalid likelihood family: {0}")]
    InvalidFamily(String),

    #[error("observation {0} is outside the family's support")]
    UnsupportedObservation(String),

    #[error("likelihood families are not comparable: {0}")]
    FamilyMismatch(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid run parameter: {0}")]
    InvalidParameter(String),

    #[error("predicted limit is ambiguous: states {states:?} tie within {tolerance:e}")]
    AmbiguousLimit { states: Vec<usize>, tolerance: f64 },

    #[error("target ({x}, {y}) is not a grid point")]
    TargetOffGrid { x: f64, y: f64 },

    #[error("point ({x}, {y}) lies outside the unit square")]
    OutOfBounds { x: f64, y: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable identifier for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSquare(_) => "not_square",
            Error::InvalidWeight { .. } => "invalid_weight",
            Error::NotRowStochastic { .. } => "not_row_stochastic",
            Error::NotStronglyConnected { .. } => "not_strongly_connected",
            Error::NoPositiveDiagonal => "no_positive_diagonal",
            Error::InvalidGamma { .. } => "invalid_gamma",
            Error::ConvergenceFailure { .. } => "convergence_failure",
            Error::InvariantViolation(_) => "invariant_violation",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidHypotheses(_) => "invalid_hypotheses",
            Error::InvalidFamily(_) => "invalid_family",
            Error::UnsupportedObservation(_) => "unsupported_observation",
            Error::FamilyMismatch(_) => "family_mismatch",
            Error::InvalidPrior(_) => "invalid_prior",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::AmbiguousLimit { .. } => "ambiguous_limit",
            Error::TargetOffGrid { .. } => "target_off_grid",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// The modelling assumption this error violates, if any.
    pub fn assumption(&self) -> Option<Assumption> {
        match self {
            Error::NotRowStochastic { .. } | Error::InvalidWeight { .. } => {
                Some(Assumption::RowStochastic)
            }
            Error::NotStronglyConnected { .. } => Some(Assumption::StronglyConnected),
            Error::NoPositiveDiagonal => Some(Assumption::PositiveDiagonal),
            Error::InvalidPrior(_) => Some(Assumption::PositivePriors),
            Error::InvalidFamily(_) => Some(Assumption::IntegrableLogLikelihoods),
            Error::InvalidGamma { .. } => Some(Assumption::SignalWeights),
            _ => None,
        }
    }

    /// Numerical failures at runtime, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ConvergenceFailure { .. } | Error::InvariantViolation(_)
        )
    }
}
