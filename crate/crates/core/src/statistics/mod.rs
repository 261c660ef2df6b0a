//! Monte Carlo checks of the ergodic and statistical properties of the limit
//! map, plus energy statistics of the full collision map.

mod ergodic;
pub mod estimators;
mod orbits;

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

pub use ergodic::{
    autocorrelation, birkhoff_average, clt_experiment, gamma_mean, BirkhoffResult, CltConfig,
    CltReport, CorrelationConfig, CorrelationReport, CorrelationRow, GammaReport,
};
pub use orbits::{
    classify_orbit, escape_fraction, mixing_box_estimator, recurrence_stats, ClassifyThresholds,
    EscapeConfig, EscapeReport, MixingConfig, MixingRow, OrbitLabel, RecurrenceConfig,
    RecurrenceReport,
};

use crate::limit_map::{torus_step, TorusPoint};
use crate::wall_motion::WallMotion;

/// Offset applied to the time coordinate when an orbit lands exactly on a
/// corner; such orbits form a null set and are nudged off it.
pub const JITTER: f64 = 1e-9;

type TorusFn = Arc<dyn Fn(TorusPoint) -> f64 + Send + Sync>;
type CylinderFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Bounded function on the torus `[0,1) x [0,g)`.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    eval: TorusFn,
    /// Mean under normalized Lebesgue measure, when known exactly.
    pub mean: Option<f64>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("mean", &self.mean)
            .finish()
    }
}

impl Observable {
    pub fn new<F>(name: impl Into<String>, mean: Option<f64>, f: F) -> Self
    where
        F: Fn(TorusPoint) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(f),
            mean,
        }
    }

    #[inline]
    pub fn eval(&self, p: TorusPoint) -> f64 {
        (self.eval)(p)
    }

    pub fn one() -> Self {
        Self::new("one", Some(1.0), |_| 1.0)
    }

    pub fn zero() -> Self {
        Self::new("zero", Some(0.0), |_| 0.0)
    }

    pub fn cos_2pi_t() -> Self {
        Self::new("cos2pi_t", Some(0.0), |p| (TAU * p.t).cos())
    }

    pub fn sin_2pi_t() -> Self {
        Self::new("sin2pi_t", Some(0.0), |p| (TAU * p.t).sin())
    }

    pub fn v_mod(g: f64) -> Self {
        Self::new("v_mod", Some(0.5 * g), |p| p.v)
    }

    /// Winding increment of the next step; zero on a corner hit.
    pub fn gamma(wall: &WallMotion) -> Self {
        let wall = wall.clone();
        Self::new("gamma", Some(0.0), move |p| {
            torus_step(p, &wall).map_or(0.0, |(_, g)| g as f64)
        })
    }

    /// Built-in observable by name.
    pub fn builtin(name: &str, wall: &WallMotion) -> Option<Self> {
        Some(match name {
            "one" => Self::one(),
            "zero" => Self::zero(),
            "cos2pi_t" => Self::cos_2pi_t(),
            "sin2pi_t" => Self::sin_2pi_t(),
            "v_mod" => Self::v_mod(wall.g()),
            "gamma" => Self::gamma(wall),
            _ => return None,
        })
    }

    pub const BUILTIN_NAMES: [&'static str; 6] =
        ["one", "zero", "cos2pi_t", "sin2pi_t", "v_mod", "gamma"];
}

/// Bounded function on the cylinder, evaluated at `(t, v)` with `v` unreduced.
#[derive(Clone)]
pub struct CylinderObservable {
    pub name: String,
    eval: CylinderFn,
    /// Global average over high-energy boxes, when known.
    pub average: Option<f64>,
}

impl fmt::Debug for CylinderObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylinderObservable")
            .field("name", &self.name)
            .field("average", &self.average)
            .finish()
    }
}

impl CylinderObservable {
    pub fn new<F>(name: impl Into<String>, average: Option<f64>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(f),
            average,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, v: f64) -> f64 {
        (self.eval)(t, v)
    }

    pub fn one() -> Self {
        Self::new("one", Some(1.0), |_, _| 1.0)
    }

    pub fn cos_2pi_t() -> Self {
        Self::new("cos2pi_t", Some(0.0), |t, _| (TAU * t).cos())
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "one" => Some(Self::one()),
            "cos2pi_t" => Some(Self::cos_2pi_t()),
            _ => None,
        }
    }
}

/// How an estimate is compared with its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Tolerance {
    /// `|estimate - target| <= value`.
    Absolute(f64),
    /// `|estimate - target| <= value * standard_error`.
    StandardErrors(f64),
    /// `estimate <= value`.
    AtMost(f64),
    /// `estimate >= value`.
    AtLeast(f64),
}

/// Outcome of one statistical check. `pass` is computed from the other
/// fields by [`StatReport::new`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatReport {
    pub experiment: String,
    pub samples: u64,
    pub estimate: f64,
    pub standard_error: f64,
    pub target: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl StatReport {
    pub fn new(
        experiment: impl Into<String>,
        samples: u64,
        estimate: f64,
        standard_error: f64,
        target: f64,
        tolerance: Tolerance,
    ) -> Self {
        let dev = (estimate - target).abs();
        let pass = match tolerance {
            Tolerance::Absolute(tol) => dev <= tol,
            Tolerance::StandardErrors(k) => standard_error > 0.0 && dev <= k * standard_error,
            Tolerance::AtMost(x) => estimate <= x,
            Tolerance::AtLeast(x) => estimate >= x,
        };
        Self {
            experiment: experiment.into(),
            samples,
            estimate,
            standard_error,
            target,
            tolerance,
            pass,
        }
    }
}

/// One torus step; a corner hit nudges the point by [`JITTER`] and retries.
#[inline]
pub(crate) fn torus_step_jittered(p: &mut TorusPoint, wall: &WallMotion, jitters: &mut u64) -> i64 {
    loop {
        match torus_step(*p, wall) {
            Ok((q, gamma)) => {
                *p = q;
                return gamma;
            }
            Err(_) => {
                *jitters += 1;
                p.t = crate::limit_map::reduce_mod(p.t + JITTER, 1.0);
            }
        }
    }
}
