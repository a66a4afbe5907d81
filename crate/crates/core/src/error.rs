use thiserror::Error;

/// Errors raised by mechanism constructors, accounting helpers and the
/// experiment harness. Every variant except `Io`/`Json`/`Csv` is a usage
/// error (bad parameters or malformed input) and maps to exit code 2 in the
/// CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("stream has {len} rounds but the horizon is {t_max}")]
    StreamTooLong { len: usize, t_max: usize },

    #[error("round {round} exceeds the horizon {t_max}")]
    HorizonExceeded { round: usize, t_max: usize },

    #[error("item `{label}` at round {round} is outside the declared domain")]
    ItemOutsideDomain { label: String, round: usize },

    #[error("event at round {round} has {size} items, more than delta0 = {delta0}")]
    EventTooLarge {
        round: usize,
        size: usize,
        delta0: usize,
    },

    #[error("k = {k} exceeds the available {available}")]
    KTooLarge { k: usize, available: usize },

    #[error("inputs are not neighbors: {0}")]
    NotNeighbors(String),

    #[error("cannot compose an empty list of budgets")]
    EmptyComposition,

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the caller's input rather than the
    /// environment.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Csv(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            "tau",
            format!("must be finite and >= 0, got {tau}"),
        ))
    }
}

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must lie in (0, 1), got {value}"),
        ))
    }
}
