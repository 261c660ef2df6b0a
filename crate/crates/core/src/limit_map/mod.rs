//! The high-energy limit map `F∞(t, v) = (t + 2v/g, v + 2 f'(t + 2v/g))`
//! and its quotient on the torus `[0,1) x [0,g)`.

mod singularity;

use std::io::{self, Write};

use serde::Serialize;

pub use singularity::{
    distance_to_singularity, multiple_points, singularity_set, write_singularity_csv,
    SingularityForest, SingularityKind, SingularityPiece, SingularitySegment,
};

use crate::collision_map::{step, CollisionState};
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::sampling::stream_rng;
use crate::statistics::estimators::linear_fit;
use crate::wall_motion::WallMotion;

const SINGULAR_TOL: f64 = 1e-12;

/// Reduces `x` into `[0, period)`, resolving ties downward.
#[inline]
pub fn reduce_mod(x: f64, period: f64) -> f64 {
    let r = x - period * (x / period).floor();
    if r >= period || r < 0.0 {
        0.0
    } else {
        r
    }
}

/// Point on the torus: time mod 1 and velocity mod g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusPoint {
    pub t: f64,
    pub v: f64,
}

impl TorusPoint {
    pub fn reduce(t: f64, v: f64, g: f64) -> Self {
        Self {
            t: reduce_mod(t, 1.0),
            v: reduce_mod(v, g),
        }
    }
}

/// Point on the cylinder split as `v = v_mod + m g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylinderPoint {
    pub t: f64,
    pub v_mod: f64,
    pub m: i64,
}

impl CylinderPoint {
    pub fn from_tv(t: f64, v: f64, g: f64) -> Self {
        let m = (v / g).floor();
        let mut v_mod = v - m * g;
        let mut m = m as i64;
        if v_mod >= g {
            v_mod -= g;
            m += 1;
        }
        Self {
            t: reduce_mod(t, 1.0),
            v_mod,
            m,
        }
    }

    pub fn velocity(&self, g: f64) -> f64 {
        self.v_mod + self.m as f64 * g
    }
}

#[inline]
fn check_landing(t1: f64) -> Result<()> {
    if (t1 - t1.round()).abs() < SINGULAR_TOL {
        Err(Error::SingularHit { t: t1 })
    } else {
        Ok(())
    }
}

/// One step of `F∞` on the cylinder.
pub fn limit_step(t: f64, v: f64, wall: &WallMotion) -> Result<(f64, f64)> {
    if !(v > 0.0) {
        return Err(Error::NonPositiveVelocity { v });
    }
    let t1 = t + 2.0 * v / wall.g();
    check_landing(t1)?;
    Ok((t1, v + 2.0 * wall.velocity(t1)))
}

/// One step of the torus map together with the winding increment
/// `γ = floor(v₁ / g)`.
#[inline]
pub fn torus_step(p: TorusPoint, wall: &WallMotion) -> Result<(TorusPoint, i64)> {
    let g = wall.g();
    let t1 = p.t + 2.0 * p.v / g;
    check_landing(t1)?;
    let v1 = p.v + 2.0 * wall.velocity(t1);
    let m = (v1 / g).floor();
    let mut v_mod = v1 - m * g;
    let mut gamma = m as i64;
    if v_mod >= g {
        v_mod -= g;
        gamma += 1;
    }
    Ok((
        TorusPoint {
            t: reduce_mod(t1, 1.0),
            v: v_mod,
        },
        gamma,
    ))
}

/// Derivative `[[1, 2/g], [2k₁, 4k₁/g + 1]]` of the torus map.
pub fn torus_jacobian(p: TorusPoint, wall: &WallMotion) -> Result<Mat2> {
    let g = wall.g();
    let t1 = p.t + 2.0 * p.v / g;
    check_landing(t1)?;
    let k1 = wall.acceleration(t1);
    Ok(Mat2::new(1.0, 2.0 / g, 2.0 * k1, 4.0 * k1 / g + 1.0))
}

/// Derivative of the torus map expressed through the landing curvature `k₁`.
#[inline]
pub fn limit_jacobian(k1: f64, g: f64) -> Mat2 {
    Mat2::new(1.0, 2.0 / g, 2.0 * k1, 4.0 * k1 / g + 1.0)
}

/// Forward map on the plane using the wall branch on `[n, n + 1]` for the
/// landing time, so that images of a piece stay continuous up to its ends.
#[inline]
pub fn lifted_forward(t: f64, v: f64, n: f64, wall: &WallMotion) -> (f64, f64) {
    let t1 = t + 2.0 * v / wall.g();
    (t1, v + 2.0 * wall.eval_branch(t1, n).velocity)
}

/// Inverse of [`lifted_forward`]; `n` selects the branch for `t₁`.
#[inline]
pub fn lifted_inverse(t1: f64, v1: f64, n: f64, wall: &WallMotion) -> (f64, f64) {
    let v0 = v1 - 2.0 * wall.eval_branch(t1, n).velocity;
    (t1 - 2.0 * v0 / wall.g(), v0)
}

/// Bound on `|γ|`: `ceil(2 max|f'| / g)`.
pub fn gamma_bound(wall: &WallMotion) -> i64 {
    (2.0 * wall.bounds().slope_max / wall.g()).ceil() as i64
}

/// Torus orbit of length `n_steps + 1` (fewer if it hits the corner).
pub fn torus_orbit(
    start: TorusPoint,
    wall: &WallMotion,
    n_steps: usize,
) -> (Vec<(TorusPoint, i64)>, Option<Error>) {
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push((start, 0));
    let mut p = start;
    for _ in 0..n_steps {
        match torus_step(p, wall) {
            Ok((q, gamma)) => {
                out.push((q, gamma));
                p = q;
            }
            Err(e) => return (out, Some(e)),
        }
    }
    (out, None)
}

/// Writes `n,t_mod,v_mod,gamma` rows; `gamma` on row `n` is the winding
/// increment of the step that produced it (0 on the first row).
pub fn write_torus_orbit_csv<W: Write>(orbit: &[(TorusPoint, i64)], mut out: W) -> io::Result<()> {
    writeln!(out, "n,t_mod,v_mod,gamma")?;
    for (i, (p, gamma)) in orbit.iter().enumerate() {
        writeln!(out, "{i},{},{},{gamma}", p.t, p.v)?;
    }
    Ok(())
}

/// Distance between one step of the collision map and of `F∞` from the
/// same departure state.
pub fn limit_deviation(t: f64, v: f64, wall: &WallMotion) -> Result<f64> {
    let full = step(&CollisionState::new(t, v, wall), wall)?;
    let (t1, v1) = limit_step(t, v, wall)?;
    Ok((full.next.t - t1).hypot(full.next.v - v1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationFit {
    pub velocities: Vec<f64>,
    /// Median deviation over random departure times at each velocity.
    pub median_deviation: Vec<f64>,
    /// Slope of `log deviation` against `log v`.
    pub slope: f64,
}

/// Log-log fit of the deviation between `F` and `F∞` over velocities
/// geometrically spaced in `[v_lo, v_hi]`. Each level draws velocities from
/// `[v, 1.1 v]` so that `2v/g` is not an integer, where the two maps agree
/// exactly. The median discards departures whose two images land on
/// different sides of a corner.
pub fn approximation_fit(
    wall: &WallMotion,
    v_lo: f64,
    v_hi: f64,
    levels: usize,
    samples: usize,
    seed: u64,
) -> ApproximationFit {
    use rand::Rng;
    let velocities: Vec<f64> = (0..levels)
        .map(|i| v_lo * (v_hi / v_lo).powf(i as f64 / (levels - 1).max(1) as f64))
        .collect();
    let median_deviation: Vec<f64> = velocities
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut rng = stream_rng(seed, i as u64);
            let mut errs: Vec<f64> = (0..samples)
                .filter_map(|_| {
                    let t = rng.random::<f64>();
                    let vs = v * (1.0 + 0.1 * rng.random::<f64>());
                    limit_deviation(t, vs, wall).ok()
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            errs.get(errs.len() / 2).copied().unwrap_or(f64::NAN)
        })
        .collect();
    let xs: Vec<f64> = velocities.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = median_deviation.iter().map(|e| e.ln()).collect();
    let slope = linear_fit(&xs, &ys).1;
    ApproximationFit {
        velocities,
        median_deviation,
        slope,
    }
}
