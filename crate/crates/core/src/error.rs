use thiserror::Error;

/// Errors raised by the simulation and numerics routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {message}")]
    NumericalFailure {
        message: String,
        diagnostics: Vec<(String, f64)>,
    },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("bisection bracket failure: {message}")]
    BracketFailure {
        message: String,
        diagnostics: Vec<(String, f64)>,
    },

    #[error("state cap too small: tail bound {tail_bound:e} at K = {cap}")]
    CapTooSmall { cap: usize, tail_bound: f64 },

    #[error("no detectable tips at sampling time")]
    EmptyTree,

    #[error("impractical acceptance rate {rate:e} (accepted {accepted} of {attempted})")]
    Impractical {
        rate: f64,
        accepted: u64,
        attempted: u64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, diagnostics: Vec<(&str, f64)>) -> Self {
        Error::NumericalFailure {
            message: msg.into(),
            diagnostics: diagnostics
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}
