//! Event-driven collision map `F(t, v) = (t + s, -v + g s + 2 f'(t + s))`.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::wall_motion::WallMotion;

const GRAZING_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-12;
const MIN_RELATIVE_VELOCITY: f64 = 1e-10;
const MAX_REFINE_ITERS: usize = 400;
/// Subdivision stops once the worst-case dip over a cell is below this
/// fraction of the residual scale; the cell is then accepted as positive.
const DIP_FLOOR: f64 = 1e-15;

/// Post-collision state of the ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionState {
    /// Absolute collision time.
    pub t: f64,
    /// Ball velocity just after the collision.
    pub v: f64,
    /// Relative velocity `v - f'(t)`.
    pub w: f64,
    /// Collision index.
    pub n: u64,
}

impl CollisionState {
    /// State leaving the wall at time `t` with velocity `v`; `w` uses the
    /// right-sided wall velocity.
    pub fn new(t: f64, v: f64, wall: &WallMotion) -> Self {
        Self {
            t,
            v,
            w: v - wall.velocity(t),
            n: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: CollisionState,
    /// Flight time.
    pub s: f64,
    /// Derivative of the map at the departing state.
    pub jac: Mat2,
}

/// Ball height above the wall, `s` time units after departing.
#[inline]
fn residual(x: f64, h0: f64, v: f64, g: f64, s: f64, wall: &WallMotion) -> f64 {
    h0 + v * s - 0.5 * g * s * s - wall.eval(x + s).height
}

/// Time until the next wall contact.
pub fn flight_time(state: &CollisionState, wall: &WallMotion) -> Result<f64> {
    let g = wall.g();
    let (v, w) = (state.v, state.w);
    if !(w > 0.0) {
        return Err(Error::NonPositiveRelativeVelocity { t: state.t, w });
    }
    let x = state.t - state.t.floor();
    let h0 = wall.eval(x).height;
    let r = |s: f64| residual(x, h0, v, g, s, wall);
    let b = wall.bounds();
    let osc = b.height_max - b.height_min;
    // |R''| <= g + max|f''| on every interval free of integer times.
    let m = g + b.k_min.abs().max(b.k_max.abs());
    let horizon = (v + (v * v + 2.0 * g * osc).sqrt()) / g;
    let scale = 1.0_f64.max(v.abs() * horizon);

    // v s - g s^2/2 > osc on (sa, sb) makes the residual positive there.
    let disc = v * v - 2.0 * g * osc;
    let (sa, sb) = if v > 0.0 && disc > 0.0 {
        let d = disc.sqrt();
        (osc * 2.0 / (v + d), (v + d) / g)
    } else {
        (horizon, horizon)
    };

    let step = (0.1_f64).min(1.0 / (4.0 * m)) * (2.0 * w / g).max(1.0);
    let first_kink = if x == 0.0 { 1.0 } else { 1.0 - x };
    // R(s) >= w s - m s^2 / 2 up to the first integer time.
    let s_start = (w / m).min(first_kink);

    let mut regions = Vec::with_capacity(2);
    if s_start < sa {
        regions.push((s_start, sa));
    }
    if sb < horizon {
        regions.push((sb.max(s_start), horizon));
    }

    for (lo, hi) in regions {
        let mut a = lo;
        let mut ra = r(a);
        while a < hi {
            // cells never straddle an integer time
            let mut next_kink = if a < first_kink {
                first_kink
            } else {
                first_kink + (a - first_kink).floor() + 1.0
            };
            if next_kink <= a {
                // rounding put `a` exactly on the kink
                next_kink += 1.0;
            }
            let b_end = (a + step).min(next_kink).min(hi);
            let rb = r(b_end);
            if rb <= 0.0 {
                return refine(state, wall, &r, a, b_end);
            }
            if let Some((lo2, hi2)) = certify(&r, a, ra, b_end, rb, m, scale, 0) {
                return refine(state, wall, &r, lo2, hi2);
            }
            a = b_end;
            ra = rb;
        }
    }
    Err(Error::NoRootFound {
        t: state.t,
        horizon,
    })
}

/// Checks the residual stays positive on `[a, b]` given positive endpoint
/// values; returns a sign-change bracket if one is found.
#[allow(clippy::too_many_arguments)]
fn certify(
    r: &impl Fn(f64) -> f64,
    a: f64,
    ra: f64,
    b: f64,
    rb: f64,
    m: f64,
    scale: f64,
    depth: u32,
) -> Option<(f64, f64)> {
    let h = b - a;
    let dip = m * h * h / 8.0;
    if ra.min(rb) > dip || dip < DIP_FLOOR * scale || depth > 60 {
        return None;
    }
    let c = 0.5 * (a + b);
    let rc = r(c);
    if rc <= 0.0 {
        return Some((a, c));
    }
    certify(r, a, ra, c, rc, m, scale, depth + 1)
        .or_else(|| certify(r, c, rc, b, rb, m, scale, depth + 1))
}

/// Regula falsi (Illinois) with bisection fallback on a bracket with
/// `r(a) > 0 >= r(b)`, then converts the root into a flight time.
fn refine(
    state: &CollisionState,
    wall: &WallMotion,
    r: &impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
) -> Result<f64> {
    let mut fa = r(a);
    let mut fb = r(b);
    let mut side = 0i8;
    for i in 0..MAX_REFINE_ITERS {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let c = if i % 4 == 3 || !(fa - fb).is_normal() {
            mid
        } else {
            let c = (a * fb - b * fa) / (fb - fa);
            if c > a && c < b {
                c
            } else {
                mid
            }
        };
        let fc = r(c);
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        if fc == 0.0 {
            break;
        }
    }
    let (ra, rb) = (r(a), r(b));
    let s = if ra.abs() < rb.abs() { a } else { b };
    let x = state.t - state.t.floor();
    let landing = x + s;
    if (landing - landing.round()).abs() < SINGULAR_TOL {
        return Err(Error::SingularCollision { t: state.t + s });
    }
    let slope = state.v - wall.g() * s - wall.velocity(landing);
    if slope.abs() < GRAZING_TOL {
        return Err(Error::GrazingCollision {
            t: state.t + s,
            slope,
        });
    }
    Ok(s)
}

/// One application of the collision map with its derivative.
pub fn step(state: &CollisionState, wall: &WallMotion) -> Result<StepOutcome> {
    let s = flight_time(state, wall)?;
    let g = wall.g();
    let x = state.t - state.t.floor();
    let ws = wall.eval(x + s);
    let t1 = state.t + s;
    let v1 = -state.v + g * s + 2.0 * ws.velocity;
    let w1 = v1 - ws.velocity;
    if w1 <= MIN_RELATIVE_VELOCITY {
        return Err(Error::NonPositiveRelativeVelocity { t: t1, w: w1 });
    }
    let k1 = ws.acceleration;
    let a = (state.v - state.w) - ws.velocity;
    let c = 2.0 * k1 + g;
    let jac = Mat2::new(
        1.0 + a / w1,
        s / w1,
        2.0 * k1 + c * a / w1,
        c * s / w1 - 1.0,
    );
    Ok(StepOutcome {
        next: CollisionState {
            t: t1,
            v: v1,
            w: w1,
            n: state.n + 1,
        },
        s,
        jac,
    })
}

/// Central finite-difference derivative of the map in `(t, v)`.
pub fn jacobian_fd(state: &CollisionState, wall: &WallMotion, h: f64) -> Result<Mat2> {
    let base = step(state, wall)?;
    let image = |t: f64, v: f64| -> Result<(f64, f64)> {
        if t.floor() != state.t.floor() {
            return Err(Error::StraddlesSingularity);
        }
        let out = step(&CollisionState::new(t, v, wall), wall)?;
        if out.next.t.floor() != base.next.t.floor()
            || (out.s - base.s).abs() > 0.1 * base.s.max(1.0)
        {
            return Err(Error::StraddlesSingularity);
        }
        Ok((out.next.t, out.next.v))
    };
    let (t, v) = (state.t, state.v);
    let tp = image(t + h, v)?;
    let tm = image(t - h, v)?;
    let vp = image(t, v + h)?;
    let vm = image(t, v - h)?;
    let d = 2.0 * h;
    Ok(Mat2::new(
        (tp.0 - tm.0) / d,
        (vp.0 - vm.0) / d,
        (tp.1 - tm.1) / d,
        (vp.1 - vm.1) / d,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    Escaped,
    Singular,
    Grazing,
    LowVelocity,
    NoRoot,
}

impl Termination {
    fn from_error(e: &Error) -> Self {
        match e {
            Error::SingularCollision { .. } => Termination::Singular,
            Error::GrazingCollision { .. } => Termination::Grazing,
            Error::NonPositiveRelativeVelocity { .. } => Termination::LowVelocity,
            _ => Termination::NoRoot,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StopConditions {
    /// Stop once the velocity exceeds this value.
    pub escape_velocity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRecord {
    pub states: Vec<CollisionState>,
    /// `flight_times[i]` separates `states[i]` and `states[i + 1]`.
    pub flight_times: Vec<f64>,
    pub termination: Termination,
    pub v_min: f64,
    pub v_max: f64,
}

pub fn simulate_orbit(
    start: CollisionState,
    wall: &WallMotion,
    n_steps: usize,
    stop: StopConditions,
) -> OrbitRecord {
    let mut states = vec![start];
    let mut flight_times = Vec::new();
    let (mut v_min, mut v_max) = (start.v, start.v);
    let mut termination = Termination::Completed;
    let mut cur = start;
    for _ in 0..n_steps {
        match step(&cur, wall) {
            Ok(out) => {
                cur = out.next;
                states.push(cur);
                flight_times.push(out.s);
                v_min = v_min.min(cur.v);
                v_max = v_max.max(cur.v);
                if stop.escape_velocity.is_some_and(|e| cur.v > e) {
                    termination = Termination::Escaped;
                    break;
                }
            }
            Err(e) => {
                termination = Termination::from_error(&e);
                break;
            }
        }
    }
    OrbitRecord {
        states,
        flight_times,
        termination,
        v_min,
        v_max,
    }
}

/// Writes `n,t,v,w,s` rows; `s` is empty on the last row.
pub fn write_orbit_csv<W: Write>(orbit: &OrbitRecord, mut out: W) -> io::Result<()> {
    writeln!(out, "n,t,v,w,s")?;
    for (i, st) in orbit.states.iter().enumerate() {
        write!(out, "{},{},{},{},", st.n, st.t, st.v, st.w)?;
        match orbit.flight_times.get(i) {
            Some(s) => writeln!(out, "{s}")?,
            None => writeln!(out)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_bounce() {
        let q = WallMotion::quadratic(1.0, 2.0);
        let st = CollisionState::new(0.25, 0.5, &q);
        assert_eq!(st.w, 0.75);
        let out = step(&st, &q).unwrap();
        assert!((out.s - 0.5).abs() < 1e-15);
        assert!((out.next.t - 0.75).abs() < 1e-15 && (out.next.v - 1.0).abs() < 1e-15);
        assert!((out.next.w - 0.75).abs() < 1e-15);
        let want = Mat2::new(1.0 / 3.0, 2.0 / 3.0, -2.0 / 3.0, 5.0 / 3.0);
        assert!(out.jac.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn rejects_non_positive_relative_velocity() {
        let q = WallMotion::quadratic(1.0, 2.0);
        let st = CollisionState {
            t: 0.25,
            v: -0.25,
            w: 0.0,
            n: 0,
        };
        assert!(matches!(
            flight_time(&st, &q),
            Err(Error::NonPositiveRelativeVelocity { .. })
        ));
    }

    #[test]
    fn singular_landing_is_rejected() {
        let q = WallMotion::quadratic(1.0, 2.0);
        // (0.25, 0.875): residual 1.125 s - 1.5 s^2 vanishes at s = 0.75, landing at t = 1
        let st = CollisionState::new(0.25, 0.875, &q);
        assert!(matches!(
            step(&st, &q),
            Err(Error::SingularCollision { .. })
        ));
    }

    #[test]
    fn orbit_csv_has_empty_last_flight_time() {
        let q = WallMotion::quadratic(1.0, 2.0);
        let orbit = simulate_orbit(
            CollisionState::new(0.25, 0.5, &q),
            &q,
            1,
            StopConditions::default(),
        );
        let mut buf = Vec::new();
        write_orbit_csv(&orbit, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,t,v,w,s");
        assert_eq!(lines[1], "0,0.25,0.5,0.75,0.5");
        assert_eq!(lines[2], "1,0.75,1,0.75,");
    }
}
