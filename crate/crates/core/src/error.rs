use thiserror::Error;

use crate::dag::Kind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed DAG: {0}")]
    MalformedDag(String),

    #[error("no profile for stage {stage} {kind:?} computations")]
    MissingProfile { stage: usize, kind: Kind },

    #[error("degenerate exponential fit: {0}")]
    DegenerateFit(String),

    #[error("planned duration {duration} of computation {id} is outside [{t_min}, {t_max}]")]
    OutOfInterval {
        id: usize,
        duration: i64,
        t_min: i64,
        t_max: i64,
    },

    #[error("enumeration needs {needed} combinations, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
