use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("resolution {0} is not a power of two >= 8")]
    BadResolution(usize),
    #[error("expected {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("field mean {mean:e} exceeds the zero-mean tolerance")]
    NonZeroMean { mean: f64 },
    #[error("Lebesgue exponent must satisfy p >= 1, got {0}")]
    BadExponent(f64),
    #[error("rescale factor {m} does not divide resolution {n}")]
    BadRescale { m: usize, n: usize },
    #[error("radius {r} outside [1/N, 1/2] for N = {n}")]
    RadiusOutOfRange { r: f64, n: usize },
    #[error("empty radii set")]
    EmptyRadii,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("CFL violation: dt * sup|u| = {courant:e} exceeds {limit:e}")]
    Cfl { courant: f64, limit: f64 },
    #[error("resolution {n} cannot represent checkerboard level {level}")]
    Incompatible { n: usize, level: u32 },
    #[error("time {t} lies beyond the scheme horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },
    #[error("divergence residual {0:e} exceeds tolerance")]
    Divergent(f64),
    #[error("zero H^1 norm")]
    ZeroH1,
    #[error("budget entry `{0}` is not declared")]
    MissingBudget(&'static str),
    #[error("time grids do not match")]
    TimeGridMismatch,
    #[error("excluded-measure budget {0} leaves an empty good set")]
    EmptyGoodSet(f64),
    #[error("i/o: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
