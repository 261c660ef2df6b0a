//! Gravity Fermi-Ulam pingpong: a ball bouncing on a periodically moving wall.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision_map;
pub mod curve;
pub mod error;
pub mod fragmentation;
pub mod hyperbolicity;
pub mod limit_map;
pub mod linalg;
pub mod poly;
pub mod sampling;
pub mod statistics;
pub mod wall_motion;

pub use collision_map::{CollisionState, StepOutcome};
pub use curve::UnstableCurve;
pub use error::{Error, Result};
pub use hyperbolicity::{Cone, ConeFamily, ConeKind, ExpansionReport};
pub use limit_map::{CylinderPoint, TorusPoint};
pub use linalg::{Mat2, Vec2};
pub use statistics::{CylinderObservable, Observable, StatReport, Tolerance};
pub use wall_motion::{Piece, Regime, Side, WallMotion, WallState};
