use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

/// Broad class of a failure, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: column `{column}` must be 0 or 1, got `{value}`")]
    NonBinaryValue { row: usize, column: String, value: String },
    #[error("row {row}: score `{column}` value `{value}` outside its declared range")]
    ScoreOutOfRange { row: usize, column: String, value: String },
    #[error("row {row}: covariate `{column}` has undeclared level `{value}`")]
    UnknownLevel { row: usize, column: String, value: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("arm z={0} has no records")]
    EmptyArm(u8),
    #[error("stratum `{stratum}` has no records in arm z={arm} and smoothing is 0")]
    EmptyCell { stratum: String, arm: u8 },
    #[error("logistic fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },
    #[error("prediction kind `{0}` requires an AI recommendation value")]
    MissingScoreContext(&'static str),
    #[error("subgroup `{0}` has no records in at least one arm")]
    EmptySubgroup(String),
    #[error("incoherent probability input: {0}")]
    IncoherentInput(String),
    #[error("nuisance fit lacks the A-conditional models")]
    MissingAConditionalFit,
    #[error("decision rule value {value} at a={a} is outside [0, 1]")]
    RuleRangeError { a: u8, value: f64 },
    #[error("both one-sided nulls rejected at l01 = {l01}")]
    ContradictoryRejection { l01: f64 },
    #[error("risk scores are missing for record {0}")]
    MissingScores(usize),
    #[error("policy references cell {0:?} that is not in the lattice")]
    UnknownCell(alloc::vec::Vec<i32>),
    #[error("no joint distribution is consistent with the observables: {0}")]
    InfeasibleObservables(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::UnknownCell(_) | Error::RuleRangeError { .. } => ErrorKind::Config,
            Error::NonConvergence { .. }
            | Error::ContradictoryRejection { .. }
            | Error::IncoherentInput(_)
            | Error::InfeasibleObservables(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
