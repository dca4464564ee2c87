use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("iteratively reweighted least squares did not converge in {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("quasi-complete separation: fitted risks reached 0 or 1")]
    QuasiSeparation,
    #[error("outcome is degenerate: all rows have the same outcome")]
    DegenerateOutcome,
    #[error("design matrix is singular (weighted normal equations are rank deficient)")]
    SingularDesign,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("logit of the supplied risks is constant; calibration slope is undefined")]
    ConstantLogit,
    #[error("{failures} failed bootstrap fits out of {replicates} replicates")]
    TooManyDegenerateReplicates { failures: usize, replicates: usize },
    #[error("cannot form {folds} stratified folds with both outcome classes")]
    UnsplittableCohort { folds: usize },
    #[error("root finding failed: {0}")]
    RootBracketFailure(String),
    #[error("Cox-Snell R² of {r2} is not compatible with shrinkage target {shrinkage}")]
    InvalidR2 { r2: f64, shrinkage: f64 },
    #[error("cohort has {rows} rows but at least {needed} are required")]
    CohortTooSmall { rows: usize, needed: usize },
    #[error("learning curve needs at least {needed} points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing or malformed header: {0}")]
    MissingHeader(String),
    #[error("row {row}: outcome must be 0 or 1, found {value:?}")]
    NonBinaryOutcome { row: usize, value: String },
    #[error("row {row}: missing or unparseable value in column {column:?}")]
    MissingValue { row: usize, column: String },
    #[error("recruitment order {order} appears more than once")]
    DuplicateOrder { order: usize },
    #[error("recruitment order is not a permutation of 1..{rows}")]
    InvalidOrder { rows: usize },
    #[error("file contains no data rows")]
    EmptyFile,

    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors that mean "this sample could not be fitted", as opposed to
    /// programming or input errors.
    pub fn is_fit_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::QuasiSeparation
                | Error::DegenerateOutcome
                | Error::SingularDesign
                | Error::ConstantLogit
                | Error::UnsplittableCohort { .. }
                | Error::TooManyDegenerateReplicates { .. }
        )
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => ErrorClass::Config,
            Error::MissingHeader(_)
            | Error::NonBinaryOutcome { .. }
            | Error::MissingValue { .. }
            | Error::DuplicateOrder { .. }
            | Error::InvalidOrder { .. }
            | Error::EmptyFile
            | Error::CohortTooSmall { .. }
            | Error::DimensionMismatch { .. }
            | Error::InsufficientPoints { .. }
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Numerical,
        }
    }
}
