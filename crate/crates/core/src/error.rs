use thiserror::Error;

/// Errors raised anywhere in the fitting, estimation and simulation pipeline.
#[derive(Debug, Error)]
pub enum RiaftError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("cannot parse `{value}` at row {row}, column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("nonpositive time at row {row}")]
    NonPositiveTime { row: usize },
    #[error("invalid event indicator `{value}` at row {row} (expected 0 or 1)")]
    InvalidEvent { row: usize, value: String },
    #[error("missing value in required column `{column}` at row {row}")]
    MissingRequired { row: usize, column: String },
    #[error("unknown {kind} label {label} at row {row}: labels must form the range 1..={max}")]
    UnknownLabel {
        kind: &'static str,
        row: usize,
        label: i64,
        max: usize,
    },
    #[error("{kind} {label} has no rows")]
    EmptyGroup { kind: &'static str, label: usize },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty response vector")]
    EmptyResponse,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("need at least two uncensored observations, found {0}")]
    TooFewEvents(usize),
    #[error("covariate `{0}` has missing values; impute before fitting")]
    MissingCovariates(String),
    #[error("posterior draws do not carry {0}")]
    MissingDraws(&'static str),
    #[error("numerical routine failed to converge: {0}")]
    Convergence(String),
    #[error("chain {chain} aborted at iteration {iter}: {reason}")]
    ChainAborted {
        chain: usize,
        iter: usize,
        reason: String,
        /// JSON dump of the last valid chain state.
        last_state: String,
    },
    #[error("target {target} cannot be bracketed: {detail}")]
    Unreachable { target: f64, detail: String },
}

pub type Result<T, E = RiaftError> = std::result::Result<T, E>;
