use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite inputs or a factorization that failed to produce a PD factor.
    #[error("numerical input error: {0}")]
    Numerical(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Data that carries no information (constant response, too few rows).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The requested computation exceeds a hard capability cap.
    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("sampler failed at iteration {iteration}: {source}")]
    Chain {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
