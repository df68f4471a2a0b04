use thiserror::Error;

pub use crate::io::GridFormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown field `{0}`")]
    UnknownField(String),

    #[error("field `{field}`: invalid parameter `{param}`: {reason}")]
    InvalidParameter {
        field: String,
        param: String,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {0:?} lies outside the declared field domain")]
    OutsideDomain(Vec<f64>),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("source {0:?} is not inside the grid with the required margin")]
    SourceOutsideGrid(Vec<f64>),

    #[error("horizon {horizon} is shorter than one time step ({dt})")]
    HorizonTooShort { horizon: f64, dt: f64 },

    #[error("mask is {0}")]
    DegenerateMask(&'static str),

    #[error("region {0} the whole grid")]
    RegionClipsGrid(&'static str),

    #[error("travel time from {from:?} to {to:?} is infinite")]
    InfiniteTravelTime { from: Vec<f64>, to: Vec<f64> },

    #[error("arrival gradient undefined at {0:?} (neighbouring values are unreached)")]
    GradientUndefined(Vec<f64>),

    #[error("descent stagnated near {0:?}; the arrival field is not smooth there")]
    DescentStagnated(Vec<f64>),

    #[error("descent did not reach the source within {0} steps")]
    DescentExhausted(usize),

    #[error(transparent)]
    GridFormat(#[from] GridFormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &str, param: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            param: param.to_string(),
            reason: reason.into(),
        }
    }
}
