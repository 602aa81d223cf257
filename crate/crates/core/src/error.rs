use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid solver options: {0}")]
    InvalidOptions(String),

    #[error("knots must be strictly increasing (violated at index {0})")]
    UnsortedKnots(usize),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("optimizer did not converge: {0}")]
    NotConverged(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("conjugate of the process penalty is not differentiable at step {step}")]
    NonDifferentiableConjugate { step: usize },

    #[error("covariance is not positive semidefinite")]
    NonPsdCovariance,

    #[error("duality gap undefined: primal value is +inf and dual value is -inf")]
    UndefinedGap,

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}
