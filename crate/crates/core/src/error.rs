use thiserror::Error;

/// Failures reported by the analysis routines.
///
/// Locations are carried as `f64` so the enum stays independent of the
/// scalar type the computation ran in.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid spin quantum number J = {0}: must be a positive integer or half-integer")]
    InvalidSpin(f64),
    #[error("need >= {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("rows are not contiguous: m = {after} is followed by m = {next}")]
    NonContiguous { after: f64, next: f64 },
    #[error("non-finite matrix element in row m = {0}")]
    NonFinite(f64),
    #[error("m = {m} lies outside [{lo}, {hi}]")]
    OutOfRange { m: f64, lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("t2 vanishes at m = {m}; the five-term analysis degenerates to a three-term recursion")]
    FallbackThreeTerm { m: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("m = {m} is not in the complex-wavevector region (discriminant {discriminant})")]
    RegionMismatch { m: f64, discriminant: f64 },
    #[error("ambiguous branch continuation at m = {m}")]
    AmbiguousContinuation { m: f64 },
    #[error("turning point at m = {m} sits on a tangency; its type is undefined")]
    UnknownLabel { m: f64 },
    #[error("another turning point lies {distance} sites from m = {m}; linear expansion not applicable")]
    QuadraticProximity { m: f64, distance: f64 },
    #[error("semiclassical velocity vanishes at m = {m}")]
    ZeroVelocity { m: f64 },
    #[error("turning point type {found} cannot be used here (expected {expected})")]
    WrongTurningPointType { expected: String, found: String },
    #[error("identity check '{what}' failed: relative residual {residual}")]
    IdentityViolation { what: String, residual: f64 },
    #[error("m = {m} lies outside the central zone (|m - m_c| <= {limit})")]
    OutsideCentralZone { m: f64, limit: f64 },
    #[error("Airy argument {0} too large (Bi overflow guard)")]
    AiryOverflow(f64),
    #[error("operator dimension {0} exceeds the supported maximum")]
    DimensionTooLarge(usize),
    #[error("recursion integration failed at m = {m}: {reason}")]
    Recursion { m: f64, reason: String },
    #[error("empty comparison mask")]
    EmptyMask,
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
