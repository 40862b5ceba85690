use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("mesh too coarse: the start point has no lattice neighbour inside the domain")]
    MeshTooCoarse,
    #[error("target unreachable: {0}")]
    TargetUnreachable(String),
    #[error("mesh incompatible with arc target: {0}")]
    MeshIncompatible(String),
    #[error("step too large: integrator error control failed at t = {t}")]
    StepTooLarge { t: f64 },
    #[error("truncation too late: start time {t_start} violates the initialization guard")]
    TruncationTooLate { t_start: f64 },
    #[error("degenerate hull")]
    DegenerateHull,
    #[error("hulls are not nested (capacity difference {0})")]
    NotNested(f64),
    #[error("capacity not increasing at sample {0}")]
    NonIncreasingCapacity(usize),
    #[error("self intersection at trace sample {0}")]
    SelfIntersection(usize),
    #[error("tip tracking diverged at t = {0}")]
    TipDiverged(f64),
    #[error("solver diverged: residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("pole on boundary")]
    PoleOnBoundary,
    #[error("empty arc")]
    EmptyArc,
    #[error("target disconnected from the start vertex")]
    TargetDisconnected,
    #[error("strip too thin at t = {t} (min height {height:e})")]
    StripTooThin { t: f64, height: f64 },
    #[error("field interpolation outside the domain at {0}")]
    FieldInterpolationOutOfDomain(String),
    #[error("point lies in the hull")]
    PointInHull,
    #[error("guard curve does not surround the start point")]
    GuardNotSurrounding,
    #[error("no contraction in Picard iteration")]
    NoContraction,
    #[error("non-positive d_y at t = {0}")]
    NonPositiveDy(f64),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
