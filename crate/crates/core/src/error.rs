use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("block {block}: {reason}")]
    BlockSolve { block: usize, reason: String },

    #[error("block {block}: inner solver exhausted {iters} iterations (bound {bound:e} > threshold {threshold:e})")]
    InnerBudget {
        block: usize,
        iters: usize,
        bound: f64,
        threshold: f64,
    },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("cached factorization built for (alpha={cached_alpha}, tau={cached_tau}), called with (alpha={alpha}, tau={tau})")]
    ParameterMismatch {
        cached_alpha: f64,
        cached_tau: f64,
        alpha: f64,
        tau: f64,
    },

    #[error("unsupported block: {0}")]
    Unsupported(String),

    #[error("trace too short: need at least {needed} entries, got {got}")]
    TraceTooShort { needed: usize, got: usize },

    #[error("no usable pairs in the tail window")]
    EmptyWindow,

    #[error("missing reference point")]
    MissingReference,

    #[error("power iteration did not converge: estimate in [{lower}, {upper}]")]
    NoConvergence { lower: f64, upper: f64 },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
