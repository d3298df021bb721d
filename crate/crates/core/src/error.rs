use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// A column with zero spread under the chosen estimator.
    #[error("degenerate column `{column}`: {reason}")]
    DegenerateColumn { column: String, reason: String },

    #[error("inconsistent parameters: {0}")]
    InconsistentParams(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("infeasible stepwise start: full model needs n > columns + 1 (n = {n}, columns = {columns})")]
    InfeasibleStart { n: usize, columns: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for bad input or configuration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidDimension(_)
            | Error::DegenerateColumn { .. }
            | Error::InvalidConfig(_)
            | Error::InvalidOptions(_)
            | Error::Parse { .. }
            | Error::Malformed(_)
            | Error::InfeasibleStart { .. }
            | Error::Json(_) => 2,
            // A failure inside a simulated replicate is a runtime failure.
            _ => 1,
        }
    }
}
