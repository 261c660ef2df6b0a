//! Invariant cone fields, expansion constants, the least expansion
//! coefficient σ, curvature and distortion bounds for the torus map.
//!
//! Cones are arcs of the projective line of tangent directions, stored by
//! their end slopes and compared through angles in `[0, π)`, so that cones
//! containing the vertical direction need no special casing.

use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;

use crate::curve::UnstableCurve;
use crate::error::{Error, Result};
use crate::limit_map::{lifted_inverse, limit_jacobian, torus_step, TorusPoint};
use crate::linalg::{Mat2, Vec2};
use crate::sampling::{par_chunks, uniform_torus_point};
use crate::wall_motion::{Regime, WallMotion};

/// Angular margin for "strictly inside".
pub const CONE_MARGIN: f64 = 1e-9;
const LANDING_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeKind {
    Unstable,
    Stable,
}

/// Which cone field to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeFamily {
    /// Point-dependent cones built from `k₀ = f''(t)`: `[2k₀, 2k₀ + g/2]` and
    /// `[-g/2, -2k₀/(4k₀/g + 1)]` for convex walls, the half-planes split by
    /// slope `k₀` for strongly concave walls.
    Hyperbolic,
    /// Constant quadrant cones for convex walls; identical to `Hyperbolic`
    /// for strongly concave walls.
    Quadrant,
}

/// Projective angle of a direction, in `[0, π)`.
#[inline]
pub fn direction_angle(v: Vec2) -> f64 {
    let a = v.y.atan2(v.x);
    let a = if a < 0.0 { a + PI } else { a };
    if a >= PI {
        0.0
    } else {
        a
    }
}

#[inline]
fn slope_angle(r: f64) -> f64 {
    if r.is_infinite() {
        PI / 2.0
    } else {
        let a = r.atan();
        if a < 0.0 {
            a + PI
        } else {
            a
        }
    }
}

/// Arc of directions from `slope_lo` turning counterclockwise to `slope_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cone {
    pub slope_lo: f64,
    pub slope_hi: f64,
    pub kind: ConeKind,
}

impl Cone {
    fn start(&self) -> f64 {
        slope_angle(self.slope_lo)
    }

    pub fn width(&self) -> f64 {
        (slope_angle(self.slope_hi) - self.start()).rem_euclid(PI)
    }

    /// Signed angular distance to the nearer edge; negative outside.
    pub fn margin(&self, v: Vec2) -> f64 {
        let w = self.width();
        let x = (direction_angle(v) - self.start()).rem_euclid(PI);
        if x <= w {
            x.min(w - x)
        } else {
            -(x - w).min(PI - x)
        }
    }

    pub fn contains_strictly(&self, v: Vec2) -> bool {
        self.margin(v) > CONE_MARGIN
    }

    /// Direction at fraction `s ∈ [0, 1]` of the arc.
    pub fn direction(&self, s: f64) -> Vec2 {
        let a = self.start() + s * self.width();
        Vec2::new(a.cos(), a.sin())
    }
}

/// Cone with the curvature `k` at the base point.
pub fn cone_with_k(
    k: f64,
    g: f64,
    regime: Regime,
    kind: ConeKind,
    family: ConeFamily,
) -> Result<Cone> {
    let (lo, hi) = match (regime, family, kind) {
        (Regime::NotAdmissible, _, _) => return Err(Error::NotAdmissible),
        (Regime::PositiveConvex, ConeFamily::Hyperbolic, ConeKind::Unstable) => {
            (2.0 * k, 2.0 * k + 0.5 * g)
        }
        (Regime::PositiveConvex, ConeFamily::Hyperbolic, ConeKind::Stable) => {
            (-0.5 * g, -2.0 * k / (4.0 * k / g + 1.0))
        }
        (Regime::PositiveConvex, ConeFamily::Quadrant, ConeKind::Unstable) => (0.0, f64::INFINITY),
        (Regime::PositiveConvex, ConeFamily::Quadrant, ConeKind::Stable) => {
            (f64::NEG_INFINITY, 0.0)
        }
        (Regime::StronglyConcave, _, ConeKind::Unstable) => (f64::NEG_INFINITY, k),
        (Regime::StronglyConcave, _, ConeKind::Stable) => (k, f64::INFINITY),
    };
    Ok(Cone {
        slope_lo: lo,
        slope_hi: hi,
        kind,
    })
}

/// Hyperbolic cone at a torus point.
pub fn cone_at(p: TorusPoint, wall: &WallMotion, kind: ConeKind) -> Result<Cone> {
    cone_with_k(
        wall.acceleration(p.t),
        wall.g(),
        wall.classify_regime(),
        kind,
        ConeFamily::Hyperbolic,
    )
}

/// Image slope `2k₁ + r / (1 + 2r/g)` of a direction with slope `r`.
#[inline]
pub fn transport_slope(r: f64, k1: f64, g: f64) -> f64 {
    if r.is_infinite() {
        2.0 * k1 + 0.5 * g
    } else {
        2.0 * k1 + r / (1.0 + 2.0 * r / g)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConeCheckReport {
    /// (point, direction) pairs tested, both kinds together.
    pub pairs_checked: usize,
    pub unstable_violations: usize,
    pub stable_violations: usize,
    pub min_unstable_margin: f64,
    pub min_stable_margin: f64,
}

impl ConeCheckReport {
    pub fn violations(&self) -> usize {
        self.unstable_violations + self.stable_violations
    }

    fn merge(mut self, o: ConeCheckReport) -> Self {
        self.pairs_checked += o.pairs_checked;
        self.unstable_violations += o.unstable_violations;
        self.stable_violations += o.stable_violations;
        self.min_unstable_margin = self.min_unstable_margin.min(o.min_unstable_margin);
        self.min_stable_margin = self.min_stable_margin.min(o.min_stable_margin);
        self
    }
}

/// Draws a torus point whose image avoids the corner by at least `LANDING_GUARD`.
fn regular_point<R: Rng>(rng: &mut R, g: f64) -> (TorusPoint, f64) {
    loop {
        let p = uniform_torus_point(rng, g);
        let t1 = p.t + 2.0 * p.v / g;
        if (t1 - t1.round()).abs() > LANDING_GUARD {
            return (p, t1);
        }
    }
}

/// Samples points and directions (both cone edges plus one interior
/// direction) and checks that `dF` maps unstable cones strictly into
/// unstable cones and `dF⁻¹` maps stable cones strictly into stable cones.
pub fn check_cone_invariance(
    wall: &WallMotion,
    family: ConeFamily,
    n_points: usize,
    seed: u64,
) -> Result<ConeCheckReport> {
    let regime = wall.classify_regime();
    if !regime.is_admissible() {
        return Err(Error::NotAdmissible);
    }
    let g = wall.g();
    let chunks = par_chunks(n_points, seed, |rng, n| {
        let mut rep = ConeCheckReport {
            min_unstable_margin: f64::INFINITY,
            min_stable_margin: f64::INFINITY,
            ..Default::default()
        };
        for _ in 0..n {
            let (p, t1) = regular_point(rng, g);
            let k0 = wall.acceleration(p.t);
            let k1 = wall.acceleration(t1);
            let d = limit_jacobian(k1, g);
            let dinv = d.inverse();
            let s: f64 = rng.random();
            for kind in [ConeKind::Unstable, ConeKind::Stable] {
                let (from, to, m) = match kind {
                    ConeKind::Unstable => (k0, k1, d),
                    ConeKind::Stable => (k1, k0, dinv),
                };
                let src = cone_with_k(from, g, regime, kind, family).expect("admissible");
                let dst = cone_with_k(to, g, regime, kind, family).expect("admissible");
                for frac in [0.0, 1.0, s] {
                    let margin = dst.margin(m.apply(src.direction(frac)));
                    rep.pairs_checked += 1;
                    match kind {
                        ConeKind::Unstable => {
                            rep.min_unstable_margin = rep.min_unstable_margin.min(margin);
                            rep.unstable_violations += usize::from(margin <= CONE_MARGIN);
                        }
                        ConeKind::Stable => {
                            rep.min_stable_margin = rep.min_stable_margin.min(margin);
                            rep.stable_violations += usize::from(margin <= CONE_MARGIN);
                        }
                    }
                }
            }
        }
        rep
    });
    let init = ConeCheckReport {
        min_unstable_margin: f64::INFINITY,
        min_stable_margin: f64::INFINITY,
        ..Default::default()
    };
    Ok(chunks.into_iter().fold(init, ConeCheckReport::merge))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub lambda: f64,
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub n0: u32,
    pub sigma_one_step_min: f64,
    /// True when `Λ` comes from numerical minimization rather than a formula.
    pub empirical: bool,
}

/// Smallest `N` with `6N / Λ^N < 1`.
pub fn n0_for(lambda: f64) -> Result<u32> {
    if !(lambda > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "expansion factor {lambda} must exceed 1"
        )));
    }
    let ln = lambda.ln();
    (1..=1_000_000u32)
        .find(|&n| (6.0 * n as f64).ln() < n as f64 * ln)
        .ok_or_else(|| Error::InvalidArgument(format!("no N0 below 10^6 for lambda {lambda}")))
}

/// Minimum of `|m v|` over unit `v` in the arc, by a dense scan followed by
/// golden-section refinement.
fn min_gain_over_arc(m: &Mat2, cone: &Cone) -> f64 {
    let f = |s: f64| m.apply(cone.direction(s)).norm();
    let n = 2000;
    let (mut best_s, mut best) = (0.0, f(0.0));
    for i in 1..=n {
        let s = i as f64 / n as f64;
        let val = f(s);
        if val < best {
            best = val;
            best_s = s;
        }
    }
    let (mut a, mut b) = (
        (best_s - 1.0 / n as f64).max(0.0),
        (best_s + 1.0 / n as f64).min(1.0),
    );
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.min(f(0.5 * (a + b)))
}

fn k_grid(wall: &WallMotion) -> Vec<f64> {
    let b = wall.bounds();
    if b.k_max - b.k_min < 1e-14 {
        return vec![b.k_min];
    }
    (0..=32)
        .map(|i| b.k_min + (b.k_max - b.k_min) * i as f64 / 32.0)
        .collect()
}

pub fn expansion_constants(wall: &WallMotion) -> Result<ExpansionReport> {
    let g = wall.g();
    match wall.classify_regime() {
        Regime::NotAdmissible => Err(Error::NotAdmissible),
        Regime::PositiveConvex => {
            let k = wall.bounds().k_min;
            let a = 1.0 + 4.0 * k / g;
            let l1 = (1.0 + 4.0 * k * k).min(4.0 / (g * g) + a * a).sqrt();
            let l2 = (4.0 * k * k + a * a).min(4.0 / (g * g) + 1.0).sqrt();
            let lambda = l1.min(l2);
            let t = 4.0 * k / g;
            Ok(ExpansionReport {
                lambda,
                lambda_1: l1,
                lambda_2: l2,
                n0: n0_for(lambda)?,
                sigma_one_step_min: (1.0 + t).sqrt() + t.sqrt(),
                empirical: false,
            })
        }
        Regime::StronglyConcave => {
            let ks = k_grid(wall);
            let regime = Regime::StronglyConcave;
            let mut l1 = f64::INFINITY;
            let mut l2 = f64::INFINITY;
            for &k0 in &ks {
                for &k1 in &ks {
                    let d = limit_jacobian(k1, g);
                    let cu =
                        cone_with_k(k0, g, regime, ConeKind::Unstable, ConeFamily::Hyperbolic)?;
                    l1 = l1.min(min_gain_over_arc(&d, &cu));
                    let cs = cone_with_k(k1, g, regime, ConeKind::Stable, ConeFamily::Hyperbolic)?;
                    l2 = l2.min(min_gain_over_arc(&d.inverse(), &cs));
                }
            }
            let lambda = l1.min(l2);
            let b = wall.bounds();
            // t = (2/g)(k₀ + k₁ + 2k₀k₁/g) is bilinear in (k₀, k₁)
            let t = [(b.k_min, b.k_min), (b.k_min, b.k_max), (b.k_max, b.k_max)]
                .iter()
                .map(|&(x, y)| 2.0 / g * (x + y + 2.0 * x * y / g))
                .fold(f64::INFINITY, f64::min);
            Ok(ExpansionReport {
                lambda,
                lambda_1: l1,
                lambda_2: l2,
                n0: n0_for(lambda)?,
                sigma_one_step_min: (1.0 + t).sqrt() + t.sqrt(),
                empirical: true,
            })
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExpansionCheck {
    pub samples: usize,
    pub violations: usize,
    pub noncontraction_violations: usize,
    pub min_ratio: f64,
}

/// Samples unit vectors in unstable cones and checks `|dF v| ≥ Λ |v|`.
pub fn check_expansion(
    wall: &WallMotion,
    lambda: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ExpansionCheck> {
    let regime = wall.classify_regime();
    if !regime.is_admissible() {
        return Err(Error::NotAdmissible);
    }
    let g = wall.g();
    let parts = par_chunks(n_samples, seed, |rng, n| {
        let mut c = ExpansionCheck {
            samples: n,
            min_ratio: f64::INFINITY,
            ..Default::default()
        };
        for i in 0..n {
            let (p, t1) = regular_point(rng, g);
            let cone = cone_with_k(
                wall.acceleration(p.t),
                g,
                regime,
                ConeKind::Unstable,
                ConeFamily::Hyperbolic,
            )
            .expect("admissible");
            // hit both edges regularly
            let s = match i % 16 {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random(),
            };
            let ratio = limit_jacobian(wall.acceleration(t1), g)
                .apply(cone.direction(s))
                .norm();
            c.min_ratio = c.min_ratio.min(ratio);
            c.violations += usize::from(ratio < lambda * (1.0 - 1e-12));
            c.noncontraction_violations += usize::from(ratio < 1.0);
        }
        c
    });
    Ok(parts.into_iter().fold(
        ExpansionCheck {
            min_ratio: f64::INFINITY,
            ..Default::default()
        },
        |a, b| ExpansionCheck {
            samples: a.samples + b.samples,
            violations: a.violations + b.violations,
            noncontraction_violations: a.noncontraction_violations + b.noncontraction_violations,
            min_ratio: a.min_ratio.min(b.min_ratio),
        },
    ))
}

/// `σ = √(1 + t) + √t` with `t = BC` for a cone-adapted matrix `[[A, B], [C, D]]`.
pub fn sigma_of(l: &Mat2) -> f64 {
    let t = l.0[0][1] * l.0[1][0];
    (1.0 + t).sqrt() + t.max(0.0).sqrt()
}

fn adapted_basis(k: f64) -> Mat2 {
    Mat2::new(0.0, 1.0, 1.0, k)
}

/// `n`-step derivative along the orbit of `p` in coordinates where the
/// cones are quadrants: the standard basis for convex walls, the basis
/// `(0, 1), (1, k)` at each end for strongly concave walls.
pub fn adapted_derivative(p: TorusPoint, wall: &WallMotion, n: usize) -> Result<Mat2> {
    let regime = wall.classify_regime();
    if !regime.is_admissible() {
        return Err(Error::NotAdmissible);
    }
    let g = wall.g();
    let mut m = Mat2::IDENTITY;
    let mut q = p;
    for _ in 0..n {
        let t1 = q.t + 2.0 * q.v / g;
        let d = limit_jacobian(wall.acceleration(t1), g);
        q = torus_step(q, wall)?.0;
        m = d * m;
    }
    Ok(match regime {
        Regime::StronglyConcave => {
            adapted_basis(wall.acceleration(q.t)).inverse()
                * m
                * adapted_basis(wall.acceleration(p.t))
        }
        _ => m,
    })
}

pub fn least_expansion_sigma(p: TorusPoint, wall: &WallMotion, n: usize) -> Result<f64> {
    Ok(sigma_of(&adapted_derivative(p, wall, n)?))
}

/// One step of the curvature recursion
/// `ψ''ₘ = 2 f'''(tₘ) + ψ''ₘ₋₁ / (1 + (2/g) ψ'ₘ₋₁)³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureStep {
    /// Slope `ψ'ₘ₋₁` of the curve before the step.
    pub slope: f64,
    /// `f'''` at the landing time `tₘ`.
    pub jerk: f64,
}

/// Returns `[ψ''₀, ψ''₁, ...]`.
pub fn curvature_evolution(psi2_0: f64, steps: &[CurvatureStep], g: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps.len() + 1);
    out.push(psi2_0);
    let mut c = psi2_0;
    for s in steps {
        let j = 1.0 + 2.0 * s.slope / g;
        c = 2.0 * s.jerk + c / (j * j * j);
        out.push(c);
    }
    out
}

/// Contraction factor `θ` of the curvature recursion on unstable slopes.
pub fn curvature_theta(wall: &WallMotion) -> Result<f64> {
    let g = wall.g();
    let b = wall.bounds();
    let j = match wall.classify_regime() {
        Regime::PositiveConvex => 1.0 + 4.0 * b.k_min / g,
        Regime::StronglyConcave => 2.0 * b.k_max.abs() / g - 1.0,
        Regime::NotAdmissible => return Err(Error::NotAdmissible),
    };
    Ok(1.0 / (j * j * j))
}

/// `|ψ''ₘ| ≤ 2 f'''_max / (1 - θ) + θᵐ |ψ''₀|`.
pub fn curvature_bound(wall: &WallMotion, psi2_0: f64, m: usize) -> Result<f64> {
    let theta = curvature_theta(wall)?;
    Ok(2.0 * wall.bounds().jerk_max / (1.0 - theta) + theta.powi(m as i32) * psi2_0.abs())
}

/// Follows the torus orbit of `p` for `n` steps, carrying a curve slope and
/// curvature; returns `(slope, curvature)` at each point, starting with the
/// initial values.
pub fn curvature_along_orbit(
    p: TorusPoint,
    slope: f64,
    psi2: f64,
    wall: &WallMotion,
    n: usize,
) -> Result<Vec<(f64, f64)>> {
    let g = wall.g();
    let mut out = vec![(slope, psi2)];
    let (mut q, mut r, mut c) = (p, slope, psi2);
    for _ in 0..n {
        let t1 = q.t + 2.0 * q.v / g;
        let st = wall.eval(t1);
        let next = curvature_evolution(
            c,
            &[CurvatureStep {
                slope: r,
                jerk: st.jerk,
            }],
            g,
        )[1];
        r = transport_slope(r, st.acceleration, g);
        c = next;
        q = torus_step(q, wall)?.0;
        out.push((r, c));
    }
    Ok(out)
}

/// `log |dF τ| / |τ|` at the vertices of a curve, with landing branch check.
fn forward_log_jacobians(
    curve: &UnstableCurve,
    wall: &WallMotion,
    n_vertices: usize,
) -> Result<Vec<((f64, f64), f64)>> {
    let g = wall.g();
    let params = curve.params(n_vertices);
    let phi = |p: (f64, f64)| p.0 + 2.0 * p.1 / g;
    let branch = phi(curve.point(0.5 * (curve.u_lo + curve.u_hi))).floor();
    params
        .iter()
        .map(|&u| {
            let x = curve.point(u);
            let land = phi(x);
            if land.floor() != branch || (land - land.round()).abs() < 1e-12 {
                return Err(Error::CrossesSingularity);
            }
            let k1 = wall.eval_branch(land, branch).acceleration;
            let tau = curve.tangent(u);
            Ok((
                x,
                (limit_jacobian(k1, g).apply(tau).norm() / tau.norm()).ln(),
            ))
        })
        .collect()
}

/// Largest `|log J(x) - log J(y)| / d(x, y)` over adjacent vertices, where
/// `J` is the expansion of the curve by one step.
pub fn distortion_check(
    curve: &UnstableCurve,
    wall: &WallMotion,
    n_vertices: usize,
) -> Result<f64> {
    let vals = forward_log_jacobians(curve, wall, n_vertices)?;
    Ok(vals
        .windows(2)
        .map(|w| {
            let d = (w[1].0 .0 - w[0].0 .0).hypot(w[1].0 .1 - w[0].0 .1);
            (w[1].1 - w[0].1).abs() / d
        })
        .fold(0.0, f64::max))
}

/// Largest `|log J₋ₖ(x) - log J₋ₖ(y)| / |W|` over vertices and `k ≤ n`,
/// where `J₋ₖ` is the expansion of the curve by `k` inverse steps.
pub fn backward_distortion(
    curve: &UnstableCurve,
    wall: &WallMotion,
    n: usize,
    n_vertices: usize,
) -> Result<f64> {
    let g = wall.g();
    let params = curve.params(n_vertices);
    let mut pts: Vec<(f64, f64)> = params.iter().map(|&u| curve.point(u)).collect();
    let mut tans: Vec<Vec2> = params
        .iter()
        .map(|&u| curve.tangent(u).normalized())
        .collect();
    let mut logj = vec![0.0; pts.len()];
    let len = curve.length();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let branch = pts[pts.len() / 2].0.floor();
        for i in 0..pts.len() {
            let (t, v) = pts[i];
            if t.floor() != branch || (t - t.round()).abs() < 1e-12 {
                return Err(Error::CrossesSingularity);
            }
            let k = wall.eval_branch(t, branch).acceleration;
            let w = limit_jacobian(k, g).inverse().apply(tans[i]);
            let gain = w.norm();
            logj[i] += gain.ln();
            tans[i] = w * (1.0 / gain);
            pts[i] = lifted_inverse(t, v, branch, wall);
        }
        let (lo, hi) = logj
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        worst = worst.max((hi - lo) / len);
    }
    Ok(worst)
}
