use thiserror::Error;

use crate::wall_motion::ValidationReport;

/// Errors produced by the simulation and verification routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("profile parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid wall profile: {0}")]
    InvalidProfile(ValidationReport),

    #[error("grazing collision at t = {t} (|dR/ds| = {slope:e})")]
    GrazingCollision { t: f64, slope: f64 },

    #[error("singular collision at integer time t = {t}")]
    SingularCollision { t: f64 },

    #[error("no wall contact found within flight horizon {horizon} from t = {t}")]
    NoRootFound { t: f64, horizon: f64 },

    #[error("non-positive relative velocity w = {w:e} after collision at t = {t}")]
    NonPositiveRelativeVelocity { t: f64, w: f64 },

    #[error("limit map hits the wall corner (landing time {t} is an integer)")]
    SingularHit { t: f64 },

    #[error("limit map needs a positive velocity, got v = {v}")]
    NonPositiveVelocity { v: f64 },

    #[error("finite-difference stencil straddles a singularity")]
    StraddlesSingularity,

    #[error("wall motion is not admissible (need f'' > 0 or f'' < -g everywhere)")]
    NotAdmissible,

    #[error("curve crosses a singularity line")]
    CrossesSingularity,

    #[error("degenerate variance estimate: {0}")]
    DegenerateVariance(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
