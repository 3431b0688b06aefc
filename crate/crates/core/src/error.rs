use thiserror::Error;

/// Errors shared across the toolkit.
///
/// Divergent moments and breached bounds are *not* errors: the first is a
/// value of [`crate::gendist::Moment`], the second a flag on a report row.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid hazard specification: {0}")]
    InvalidSpec(String),

    #[error("improper distribution")]
    ImproperDistribution,

    #[error("horizon exhausted: no retained event beyond t = {t}")]
    HorizonExhausted { t: f64 },

    #[error("grid too coarse: step {step} does not resolve mean inter-event time {mean}")]
    GridTooCoarse { step: f64, mean: f64 },

    #[error("threshold beyond support: survival vanishes at age {age}")]
    ThresholdBeyondSupport { age: f64 },

    #[error("coupling construction inapplicable: per-epoch success probability is zero")]
    CouplingInapplicable,

    #[error("binning mismatch between histograms")]
    BinningMismatch,

    #[error("majorant too small: rate {rate} exceeds majorant {majorant} at {state}")]
    MajorantTooSmall {
        rate: f64,
        majorant: f64,
        state: String,
    },

    #[error("rate rule returned {rate} at {state}")]
    InvalidRate { rate: f64, state: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn invalid_spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }
}
