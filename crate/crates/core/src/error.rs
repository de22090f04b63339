use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("invalid distribution: {0}")]
    InvalidDist(String),

    #[error("degenerate noise variance {0}")]
    DegenerateVariance(f64),

    #[error("price grid is empty")]
    EmptyGrid,

    #[error("inconsistent sizes: {0}")]
    Inconsistent(String),

    #[error("non-finite value at t={t}, r={r}, p={p}")]
    NonFinite { t: usize, r: u32, p: f64 },

    #[error("period t={t} is not a decision period of a horizon-{horizon} problem")]
    NotDecisionPeriod { t: usize, horizon: usize },

    #[error("horizon {0} is not in the solved family")]
    UnknownHorizon(usize),

    #[error("unknown risk metric kind `{0}`")]
    UnknownMetric(String),

    #[error("need at least {need} paths, got {got}")]
    TooFewPaths { need: usize, got: usize },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("job lambda={lambda}, alpha={alpha}, T={horizon}: {source}")]
    Job {
        lambda: f64,
        alpha: f64,
        horizon: usize,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        field,
        reason: reason.into(),
    }
}
