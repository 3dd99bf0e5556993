use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    MalformedRow { line: u64, msg: String },

    #[error("line {line}: negative discharge {value} for river '{river}'")]
    NegativeDischarge {
        line: u64,
        river: String,
        value: f64,
    },

    #[error("line {line}: duplicate record for river '{river}' on {date}")]
    DuplicateRecord {
        line: u64,
        river: String,
        date: String,
    },

    #[error("no complete year found")]
    NoCompleteYear,

    #[error("gap in daily coverage: {0}")]
    CoverageGap(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid reservoir spec: {0}")]
    InvalidSpec(String),

    #[error("scenario '{scenario}' has no flow series for river '{river}'")]
    MissingRiver { scenario: String, river: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("insufficient years: {0}")]
    InsufficientYears(String),

    #[error("invalid LP: {0}")]
    InvalidLp(String),

    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    #[error("solution status is {0:?}, expected Optimal")]
    NotOptimal(crate::lp::Status),

    #[error("infeasible scenarios: {}", .labels.join(", "))]
    InfeasibleScenarios {
        ids: Vec<usize>,
        labels: Vec<String>,
    },

    #[error("infeasible at confidence level {level}")]
    InfeasibleLevel { level: f64 },

    #[error("infeasible window starting at step {start}: {cause}")]
    InfeasibleWindow { start: usize, cause: Box<Error> },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incomplete rule curve: {0}")]
    IncompleteCurve(String),

    #[error("config: {0}")]
    Config(String),

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

    /// True when the failure is a model infeasibility rather than bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleScenarios { .. }
                | Error::InfeasibleLevel { .. }
                | Error::InfeasibleWindow { .. }
        )
    }
}
