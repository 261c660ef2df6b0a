//! Evolution of short unstable curves under the torus map: cutting along
//! `S⁺`, complexity counts, expansion of components, growth of the
//! distance to component boundaries and separation times.
//!
//! A component is a parameter interval of the original curve together with
//! the lifted map branch taken at each step. Points of a component are
//! recomputed from the original curve, so cut points carry no accumulated
//! polyline error.

use std::io::{self, Write};

use rand::Rng;
use serde::Serialize;

use crate::curve::UnstableCurve;
use crate::error::{Error, Result};
use crate::hyperbolicity::{cone_with_k, ConeFamily, ConeKind};
use crate::limit_map::{
    lifted_forward, lifted_inverse, limit_jacobian, multiple_points, singularity_set,
    SingularityKind, TorusPoint,
};
use crate::linalg::Vec2;
use crate::sampling::{par_chunks, uniform_torus_point};
use crate::wall_motion::{Regime, WallMotion};

/// Components shorter than this are dropped after cutting.
pub const MIN_COMPONENT_LENGTH: f64 = 1e-12;
const EXPANSION_SAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    /// Parameter interval on the original curve.
    pub u_lo: f64,
    pub u_hi: f64,
    /// Lifted images of the two ends.
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub length: f64,
    /// Minimum expansion factor of the `n`-step map on the preimage.
    pub expansion: f64,
    /// Minimum one-step expansion factor met along the way.
    pub min_step_expansion: f64,
    #[serde(skip)]
    branches: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentationRecord {
    pub generation: usize,
    pub curve: UnstableCurve,
    pub components: Vec<Component>,
}

impl FragmentationRecord {
    pub fn sum_inv_expansion(&self) -> f64 {
        self.components.iter().map(|c| 1.0 / c.expansion).sum()
    }
}

/// Point, unit tangent and curvature of a curve image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transported {
    pub point: (f64, f64),
    pub tangent: Vec2,
    /// `d²v/dt²` of the image viewed as a graph over `t`.
    pub curvature: f64,
    /// `|dFⁿ W'| / |W'|`.
    pub expansion: f64,
    pub min_step_expansion: f64,
}

#[inline]
fn phi(p: (f64, f64), g: f64) -> f64 {
    p.0 + 2.0 * p.1 / g
}

fn image_point(curve: &UnstableCurve, branches: &[f64], u: f64, wall: &WallMotion) -> (f64, f64) {
    let mut p = curve.point(u);
    for &n in branches {
        p = lifted_forward(p.0, p.1, n, wall);
    }
    p
}

fn transport(curve: &UnstableCurve, branches: &[f64], u: f64, wall: &WallMotion) -> Transported {
    let g = wall.g();
    let mut p = curve.point(u);
    let tau0 = curve.tangent(u);
    let mut tau = tau0;
    let mut c = curve.curvature;
    let mut min_step = f64::INFINITY;
    for &n in branches {
        let land = phi(p, g);
        let st = wall.eval_branch(land, n);
        let r = tau.y / tau.x;
        let j = 1.0 + 2.0 * r / g;
        c = 2.0 * st.jerk + c / (j * j * j);
        let next = limit_jacobian(st.acceleration, g).apply(tau);
        min_step = min_step.min(next.norm() / tau.norm());
        tau = next;
        p = lifted_forward(p.0, p.1, n, wall);
    }
    Transported {
        point: p,
        tangent: tau.normalized(),
        curvature: c,
        expansion: tau.norm() / tau0.norm(),
        min_step_expansion: min_step,
    }
}

/// Point, tangent and curvature at parameter `u` of a component's image.
pub fn component_transport(
    rec: &FragmentationRecord,
    comp: &Component,
    u: f64,
    wall: &WallMotion,
) -> Transported {
    transport(&rec.curve, &comp.branches, u, wall)
}

fn bisect_level(f: &impl Fn(f64) -> f64, mut a: f64, fa: f64, mut b: f64, level: f64) -> f64 {
    let below = fa < level;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m) < level) == below {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Parameters in `(a, b)` where `f` crosses an integer, assuming at most
/// `samples` monotone stretches.
fn integer_crossings(f: &impl Fn(f64) -> f64, a: f64, b: f64, samples: usize) -> Vec<f64> {
    let nudge = 1e-9 * (b - a);
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(samples + 1);
    for i in 0..=samples {
        let u = if i == 0 {
            a + nudge
        } else if i == samples {
            b - nudge
        } else {
            a + (b - a) * i as f64 / samples as f64
        };
        pts.push((u, f(u)));
    }
    let mut cuts = Vec::new();
    for w in pts.windows(2) {
        let ((ua, fa), (ub, fb)) = (w[0], w[1]);
        let (lo, hi) = (fa.min(fb).floor(), fa.max(fb).floor());
        if lo == hi {
            continue;
        }
        let mut found: Vec<f64> = ((lo as i64 + 1)..=(hi as i64))
            .map(|n| bisect_level(f, ua, fa, ub, n as f64))
            .collect();
        found.sort_by(f64::total_cmp);
        cuts.extend(found);
    }
    cuts
}

fn speed(curve: &UnstableCurve, branches: &[f64], u: f64, wall: &WallMotion) -> f64 {
    let t = transport(curve, branches, u, wall);
    t.expansion * curve.tangent(u).norm()
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Arclength of an image between two parameters.
fn image_arclength(
    curve: &UnstableCurve,
    branches: &[f64],
    a: f64,
    b: f64,
    wall: &WallMotion,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let f = |u: f64| speed(curve, branches, u, wall);
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(
        &f,
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        1e-9 * whole.abs().max(1e-300),
        12,
    )
}

/// Iterates a curve `n` times, cutting it wherever an image crosses `S⁺`.
pub fn evolve_curve(curve: &UnstableCurve, wall: &WallMotion, n: usize) -> FragmentationRecord {
    let g = wall.g();
    let mut pieces: Vec<(f64, f64, Vec<f64>)> = vec![(curve.u_lo, curve.u_hi, Vec::new())];
    for _ in 0..n {
        let mut next = Vec::with_capacity(pieces.len());
        for (a, b, br) in pieces {
            let f = |u: f64| phi(image_point(curve, &br, u, wall), g);
            let mut cuts = vec![a];
            cuts.extend(integer_crossings(&f, a, b, 2));
            cuts.push(b);
            for w in cuts.windows(2) {
                let (ca, cb) = (w[0], w[1]);
                if cb <= ca {
                    continue;
                }
                let mut branches = br.clone();
                branches.push(f(0.5 * (ca + cb)).floor());
                let (pa, pb) = (
                    image_point(curve, &branches, ca, wall),
                    image_point(curve, &branches, cb, wall),
                );
                if (pb.0 - pa.0).hypot(pb.1 - pa.1) < MIN_COMPONENT_LENGTH {
                    continue;
                }
                next.push((ca, cb, branches));
            }
        }
        pieces = next;
    }
    let components = pieces
        .into_iter()
        .map(|(a, b, branches)| {
            let (mut expansion, mut min_step) = (f64::INFINITY, f64::INFINITY);
            for i in 0..EXPANSION_SAMPLES {
                let u = a + (b - a) * i as f64 / (EXPANSION_SAMPLES - 1) as f64;
                let tr = transport(curve, &branches, u, wall);
                expansion = expansion.min(tr.expansion);
                min_step = min_step.min(tr.min_step_expansion);
            }
            Component {
                u_lo: a,
                u_hi: b,
                start: image_point(curve, &branches, a, wall),
                end: image_point(curve, &branches, b, wall),
                length: image_arclength(curve, &branches, a, b, wall),
                expansion,
                min_step_expansion: min_step,
                branches,
            }
        })
        .collect();
    FragmentationRecord {
        generation: n,
        curve: *curve,
        components,
    }
}

/// Random unit direction well inside the unstable cone at `p`, as a slope.
fn random_unstable_slope<R: Rng>(rng: &mut R, p: TorusPoint, wall: &WallMotion) -> Result<f64> {
    let cone = cone_with_k(
        wall.acceleration(p.t),
        wall.g(),
        wall.classify_regime(),
        ConeKind::Unstable,
        ConeFamily::Hyperbolic,
    )?;
    let d = cone.direction(rng.random_range(0.02..0.98));
    Ok(d.y / d.x)
}

/// Curve length used for the complexity count at generation `n`:
/// `min(1e-4, 1e-2 ρ⁻ⁿ)` with `ρ` the largest one-step stretching, so the
/// image stays short enough to see only singularity curves through the
/// center.
pub fn complexity_epsilon(wall: &WallMotion, n: usize) -> f64 {
    let b = wall.bounds();
    let rho = [b.k_min, b.k_max]
        .iter()
        .map(|&k| limit_jacobian(k, wall.g()).operator_norm())
        .fold(1.0, f64::max);
    1e-4_f64.min(1e-2 * rho.powi(-(n as i32)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub n: usize,
    pub trials: usize,
    pub epsilon: f64,
    pub max_components: usize,
    pub mean_components: f64,
    pub bound: usize,
    /// Component count of every trial, in trial order.
    pub counts: Vec<usize>,
    /// `Σᵢ 1/Λᵢ` of every trial, in trial order.
    pub sums: Vec<f64>,
}

/// Maximum number of components of `Fⁿ W` over short curves `W`. Half of
/// the curves are centered near points where several curves of `S⁺`
/// iterates meet, the rest uniformly.
pub fn complexity_count(
    wall: &WallMotion,
    n: usize,
    n_trials: usize,
    seed: u64,
) -> Result<ComplexityReport> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "complexity count needs n >= 1".into(),
        ));
    }
    if !wall.classify_regime().is_admissible() {
        return Err(Error::NotAdmissible);
    }
    let g = wall.g();
    let eps = complexity_epsilon(wall, n);
    // meeting points of low generations; higher generations are too long to enumerate
    let forest = singularity_set(wall, SingularityKind::Plus, n.min(4), 0.05);
    let centers = multiple_points(&forest);
    let chunks = par_chunks(n_trials, seed, |rng, count| {
        (0..count)
            .map(|i| {
                let p = if i % 2 == 0 && !centers.is_empty() {
                    let c = centers[rng.random_range(0..centers.len())];
                    let r = eps * rng.random::<f64>();
                    let a = std::f64::consts::TAU * rng.random::<f64>();
                    TorusPoint::reduce(c.t + r * a.cos(), c.v + r * a.sin(), g)
                } else {
                    uniform_torus_point(rng, g)
                };
                let slope = random_unstable_slope(rng, p, wall).expect("admissible");
                let curve = UnstableCurve::with_length((p.t, p.v), slope, 0.0, eps);
                let rec = evolve_curve(&curve, wall, n);
                (rec.components.len(), rec.sum_inv_expansion())
            })
            .collect::<Vec<_>>()
    });
    let (counts, sums): (Vec<usize>, Vec<f64>) = chunks.into_iter().flatten().unzip();
    let max_components = counts.iter().copied().max().unwrap_or(0);
    let mean_components = counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64;
    Ok(ComplexityReport {
        n,
        trials: counts.len(),
        epsilon: eps,
        max_components,
        mean_components,
        bound: 6 * n,
        counts,
        sums,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRow {
    pub epsilon: f64,
    /// Mean of `mes_W{rₙ < ε} / |W|`.
    pub fraction: f64,
    /// `mes_W{r₀ < ε Λ⁻ⁿ} / |W|`, the contribution of the original ends.
    pub initial_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub n: usize,
    pub trials: usize,
    pub curve_length: f64,
    pub rows: Vec<GrowthRow>,
    /// Smallest `C` with `fraction ≤ C ε + initial_term` over the grid.
    pub c_fit: f64,
    /// `(δ₂, share of W in image components shorter than δ₂)` for δ₂/2, δ₂, 2δ₂.
    pub short_fraction: Vec<(f64, f64)>,
}

/// Measure on `W` of points whose image lies within `eps` (along the
/// image) of an end of its component, as a fraction of `|W|`.
fn near_boundary_fraction(rec: &FragmentationRecord, tables: &[Vec<(f64, f64)>], eps: f64) -> f64 {
    let w = rec.curve.length();
    let mut mes = 0.0;
    for (comp, table) in rec.components.iter().zip(tables) {
        let total = table.last().map(|x| x.1).unwrap_or(0.0);
        if total <= 2.0 * eps {
            mes += rec.curve.arclength(comp.u_lo, comp.u_hi);
            continue;
        }
        let u_at = |s: f64| -> f64 {
            let i = table.partition_point(|x| x.1 < s).clamp(1, table.len() - 1);
            let ((u0, s0), (u1, s1)) = (table[i - 1], table[i]);
            if s1 == s0 {
                u0
            } else {
                u0 + (u1 - u0) * (s - s0) / (s1 - s0)
            }
        };
        mes += rec.curve.arclength(comp.u_lo, u_at(eps));
        mes += rec.curve.arclength(u_at(total - eps), comp.u_hi);
    }
    (mes / w).min(1.0)
}

/// Cumulative image arclength on a fixed grid of each component.
fn arclength_tables(rec: &FragmentationRecord, wall: &WallMotion) -> Vec<Vec<(f64, f64)>> {
    const PANELS: usize = 128;
    rec.components
        .iter()
        .map(|c| {
            let mut table = Vec::with_capacity(PANELS + 1);
            table.push((c.u_lo, 0.0));
            let mut acc = 0.0;
            for i in 0..PANELS {
                let a = c.u_lo + (c.u_hi - c.u_lo) * i as f64 / PANELS as f64;
                let b = c.u_lo + (c.u_hi - c.u_lo) * (i + 1) as f64 / PANELS as f64;
                acc += image_arclength(&rec.curve, &c.branches, a, b, wall);
                table.push((b, acc));
            }
            table
        })
        .collect()
}

pub struct GrowthParams<'a> {
    pub n: usize,
    pub trials: usize,
    pub curve_length: f64,
    pub eps_grid: &'a [f64],
    pub delta2: f64,
    pub lambda: f64,
    pub seed: u64,
}

/// Distribution of the distance from `Fⁿ x` to the ends of its component,
/// averaged over random unstable curves.
pub fn growth_experiment(wall: &WallMotion, params: &GrowthParams<'_>) -> Result<GrowthReport> {
    if !wall.classify_regime().is_admissible() {
        return Err(Error::NotAdmissible);
    }
    let g = wall.g();
    let n = params.n;
    let len = params.curve_length;
    let deltas = [0.5 * params.delta2, params.delta2, 2.0 * params.delta2];
    let chunks = par_chunks(params.trials, params.seed, |rng, count| {
        (0..count)
            .map(|_| {
                let p = uniform_torus_point(rng, g);
                let slope = random_unstable_slope(rng, p, wall).expect("admissible");
                let curve = UnstableCurve::with_length((p.t, p.v), slope, 0.0, len);
                let rec = evolve_curve(&curve, wall, n);
                let tables = arclength_tables(&rec, wall);
                let fr: Vec<f64> = params
                    .eps_grid
                    .iter()
                    .map(|&e| near_boundary_fraction(&rec, &tables, e))
                    .collect();
                let w = rec.curve.length();
                let short: Vec<f64> = deltas
                    .iter()
                    .map(|&d| {
                        rec.components
                            .iter()
                            .filter(|c| c.length < d)
                            .map(|c| rec.curve.arclength(c.u_lo, c.u_hi))
                            .sum::<f64>()
                            / w
                    })
                    .collect();
                (fr, short)
            })
            .collect::<Vec<_>>()
    });
    let results: Vec<(Vec<f64>, Vec<f64>)> = chunks.into_iter().flatten().collect();
    let trials = results.len().max(1) as f64;
    let scale = params.lambda.powi(n as i32);
    let rows: Vec<GrowthRow> = params
        .eps_grid
        .iter()
        .enumerate()
        .map(|(i, &e)| GrowthRow {
            epsilon: e,
            fraction: results.iter().map(|r| r.0[i]).sum::<f64>() / trials,
            initial_term: (2.0 * e / scale / len).min(1.0),
        })
        .collect();
    let c_fit = rows
        .iter()
        .map(|r| ((r.fraction - r.initial_term) / r.epsilon).max(0.0))
        .fold(0.0, f64::max);
    let short_fraction = deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| (d, results.iter().map(|r| r.1[i]).sum::<f64>() / trials))
        .collect();
    Ok(GrowthReport {
        n,
        trials: results.len(),
        curve_length: len,
        rows,
        c_fit,
        short_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SeparationTime {
    Steps(usize),
    HorizonExceeded,
}

/// Lift of `y` closest to `x` in velocity; time is not wrapped because the
/// line `t ≡ 0` bounds the phase space.
fn lift_near(x: TorusPoint, y: TorusPoint, g: f64) -> (f64, f64) {
    let dv = y.v - x.v;
    (y.t, y.v - g * (dv / g).round())
}

/// Smallest `n ≤ horizon` such that the segment between the `n`-th images
/// of `x` and `y` crosses `S⁺` (forward) or `S⁻` (backward).
///
/// Forward, the segment crosses `S⁺` when `t + 2v/g` has different integer
/// parts at its ends. Backward, it crosses `S⁻` when the preimages lie on
/// different sides of `t ≡ 0`.
pub fn separation_time(
    x: TorusPoint,
    y: TorusPoint,
    wall: &WallMotion,
    direction: Direction,
    horizon: usize,
) -> SeparationTime {
    let g = wall.g();
    let mut a = (x.t, x.v);
    let mut b = lift_near(x, y, g);
    for n in 0..=horizon {
        match direction {
            Direction::Forward => {
                let (fa, fb) = (phi(a, g), phi(b, g));
                if fa.floor() != fb.floor() {
                    return SeparationTime::Steps(n);
                }
                let br = fa.floor();
                a = lifted_forward(a.0, a.1, br, wall);
                b = lifted_forward(b.0, b.1, br, wall);
            }
            Direction::Backward => {
                let br = a.0.floor();
                a = lifted_inverse(a.0, a.1, br, wall);
                b = lifted_inverse(b.0, b.1, br, wall);
                if a.0.floor() != b.0.floor() {
                    return SeparationTime::Steps(n);
                }
            }
        }
    }
    SeparationTime::HorizonExceeded
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentationRow {
    pub trial: usize,
    pub n: usize,
    pub components: usize,
    pub sum_inv_lambda: f64,
    pub max_bound_6n: usize,
}

/// Writes `trial,n,components,sum_inv_lambda,max_bound_6n` rows.
pub fn write_fragmentation_csv<W: Write>(rows: &[FragmentationRow], mut out: W) -> io::Result<()> {
    writeln!(out, "trial,n,components,sum_inv_lambda,max_bound_6n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.trial, r.n, r.components, r.sum_inv_lambda, r.max_bound_6n
        )?;
    }
    Ok(())
}

/// Random unstable curve of the given length, for drivers and tests.
pub fn random_unstable_curve<R: Rng>(
    rng: &mut R,
    wall: &WallMotion,
    length: f64,
) -> Result<UnstableCurve> {
    if wall.classify_regime() == Regime::NotAdmissible {
        return Err(Error::NotAdmissible);
    }
    let p = uniform_torus_point(rng, wall.g());
    let slope = random_unstable_slope(rng, p, wall)?;
    Ok(UnstableCurve::with_length((p.t, p.v), slope, 0.0, length))
}
