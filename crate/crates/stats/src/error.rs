use thiserror::Error;

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum StatsError {
    /// Caller broke a shape or pairing precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("rank-deficient design; offending columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("optimizer did not converge after {iterations} iterations (last log-likelihood {last})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        trace: Vec<f64>,
    },

    #[error("fold {fold}: {detail}")]
    Fold { fold: usize, detail: String },

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("nothing to summarize: {0}")]
    Empty(String),
}
