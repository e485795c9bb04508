use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite time value {0}")]
    NonFiniteTime(f64),

    #[error("interval ({a}, {b}] is not contained in window ({lo}, {hi}]")]
    WindowViolation { a: f64, b: f64, lo: f64, hi: f64 },

    #[error("arrival count exceeded the runaway cap of {cap}")]
    RunawayGeneration { cap: usize },

    #[error("interarrival law is unbounded and no size-bias pool is configured")]
    UnboundedWithoutPool,

    #[error("closed-form accessor unavailable: {0}")]
    AccessorUnavailable(&'static str),

    #[error("no point after t = {t} within the simulated horizon {horizon}")]
    NoPointAfter { t: f64, horizon: f64 },

    #[error("adaptive quadrature did not converge on [{a}, {b}]")]
    QuadratureNonConvergence { a: f64, b: f64 },

    #[error("step function support [{lo}, {hi}) exceeds tabulated range [{range_lo}, {range_hi}]")]
    SupportExceedsRange {
        lo: f64,
        hi: f64,
        range_lo: f64,
        range_hi: f64,
    },

    #[error("empty sample")]
    EmptySample,

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
