//! Singularity curves of the torus map and their iterates.
//!
//! `S⁺` is the set of points whose next collision happens at an integer
//! time, `t + 2v/g ≡ 0`. `S⁻` is the set of points whose previous collision
//! happened at an integer time, `t + (4/g) f'(t) - 2v/g ≡ 0`. Generation `n`
//! adds the first `n - 1` preimages of `S⁺` (images of `S⁻`).
//!
//! Every curve is kept as a parametrized piece of an exact base curve
//! carried through a fixed sequence of lifted map branches, so points on
//! it can be recomputed at any parameter without accumulating polyline
//! error. Pieces link to the piece they were cut from.

use std::io::{self, Write};

use serde::Serialize;

use super::{lifted_forward, lifted_inverse, TorusPoint};
use crate::wall_motion::WallMotion;

const MAX_REFINE_DEPTH: u32 = 40;
const MIN_PIECE_WIDTH: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SingularityKind {
    Plus,
    Minus,
}

impl SingularityKind {
    pub fn label(self) -> &'static str {
        match self {
            SingularityKind::Plus => "S+",
            SingularityKind::Minus => "S-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Base {
    /// `t + 2v/g = c`, parametrized by `t ∈ [0, 1]`.
    Line { c: f64 },
    /// `v = g t / 2 + 2 f'(t) - j g / 2`, with `f'` from the branch on `(0, 1)`.
    Branch { j: f64 },
}

impl Base {
    fn point(self, u: f64, wall: &WallMotion) -> (f64, f64) {
        let g = wall.g();
        match self {
            Base::Line { c } => (u, 0.5 * g * (c - u)),
            Base::Branch { j } => (
                u,
                0.5 * g * u + 2.0 * wall.eval_branch(u, 0.0).velocity - 0.5 * j * g,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularityPiece {
    /// Number of map applications taking the base curve to this piece.
    pub level: usize,
    pub parent: Option<usize>,
    pub u_lo: f64,
    pub u_hi: f64,
    base: usize,
    branches: Vec<f64>,
    params: Vec<f64>,
    /// Lifted (unreduced) polyline.
    pub points: Vec<(f64, f64)>,
}

/// All pieces of one generation-`n` singularity set.
#[derive(Debug, Clone)]
pub struct SingularityForest {
    pub kind: SingularityKind,
    pub generation: usize,
    pub resolution: f64,
    pub pieces: Vec<SingularityPiece>,
    bases: Vec<Base>,
    wall: WallMotion,
}

/// One connected polyline inside the fundamental domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularitySegment {
    pub kind: SingularityKind,
    /// Smallest `n` with the segment inside `S_n`.
    pub generation: usize,
    pub points: Vec<TorusPoint>,
    /// Minimum and maximum of `dv/dt` over the polyline edges.
    pub slope_range: (f64, f64),
}

/// Builds `S_n⁺` or `S_n⁻` at the given polyline resolution.
pub fn singularity_set(
    wall: &WallMotion,
    kind: SingularityKind,
    n: usize,
    resolution: f64,
) -> SingularityForest {
    SingularityForest::build(wall, kind, n, resolution)
}

impl SingularityForest {
    pub fn build(wall: &WallMotion, kind: SingularityKind, n: usize, resolution: f64) -> Self {
        let bases = match kind {
            SingularityKind::Plus => vec![Base::Line { c: 1.0 }, Base::Line { c: 2.0 }],
            SingularityKind::Minus => vec![Base::Branch { j: 0.0 }, Base::Branch { j: 1.0 }],
        };
        let mut forest = Self {
            kind,
            generation: n.max(1),
            resolution,
            pieces: Vec::new(),
            bases,
            wall: wall.clone(),
        };
        for base in 0..forest.bases.len() {
            let piece = forest.sampled_piece(base, Vec::new(), 0.0, 1.0, None);
            forest.pieces.push(piece);
        }
        let mut frontier: Vec<usize> = (0..forest.pieces.len()).collect();
        for _ in 1..forest.generation {
            let mut next = Vec::new();
            for idx in frontier {
                for child in forest.children_of(idx) {
                    next.push(forest.pieces.len());
                    forest.pieces.push(child);
                }
            }
            frontier = next;
        }
        forest
    }

    /// Lifted point at parameter `u` of a piece.
    pub fn point(&self, piece: usize, u: f64) -> (f64, f64) {
        let p = &self.pieces[piece];
        self.eval(p.base, &p.branches, u)
    }

    fn eval(&self, base: usize, branches: &[f64], u: f64) -> (f64, f64) {
        let (mut t, mut v) = self.bases[base].point(u, &self.wall);
        for &n in branches {
            (t, v) = match self.kind {
                SingularityKind::Plus => lifted_inverse(t, v, n, &self.wall),
                SingularityKind::Minus => lifted_forward(t, v, n, &self.wall),
            };
        }
        (t, v)
    }

    /// Quantity whose integer crossings cut the next iterate.
    fn cut_function(&self, p: (f64, f64)) -> f64 {
        match self.kind {
            SingularityKind::Plus => p.0,
            SingularityKind::Minus => p.0 + 2.0 * p.1 / self.wall.g(),
        }
    }

    fn sampled_piece(
        &self,
        base: usize,
        branches: Vec<f64>,
        u_lo: f64,
        u_hi: f64,
        parent: Option<usize>,
    ) -> SingularityPiece {
        let eval = |u: f64| self.eval(base, &branches, u);
        let mut params = Vec::new();
        let mut points = Vec::new();
        let n0 = 16;
        let mut prev_u = u_lo;
        let mut prev_p = eval(u_lo);
        params.push(prev_u);
        points.push(prev_p);
        for i in 1..=n0 {
            let u = if i == n0 {
                u_hi
            } else {
                u_lo + (u_hi - u_lo) * i as f64 / n0 as f64
            };
            let p = eval(u);
            self.refine_edge(&eval, prev_u, prev_p, u, p, 0, &mut params, &mut points);
            params.push(u);
            points.push(p);
            prev_u = u;
            prev_p = p;
        }
        let level = branches.len();
        SingularityPiece {
            level,
            parent,
            u_lo,
            u_hi,
            base,
            branches,
            params,
            points,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn refine_edge(
        &self,
        eval: &impl Fn(f64) -> (f64, f64),
        ua: f64,
        pa: (f64, f64),
        ub: f64,
        pb: (f64, f64),
        depth: u32,
        params: &mut Vec<f64>,
        points: &mut Vec<(f64, f64)>,
    ) {
        if depth >= MAX_REFINE_DEPTH || (pb.0 - pa.0).hypot(pb.1 - pa.1) <= self.resolution {
            return;
        }
        let um = 0.5 * (ua + ub);
        let pm = eval(um);
        self.refine_edge(eval, ua, pa, um, pm, depth + 1, params, points);
        params.push(um);
        points.push(pm);
        self.refine_edge(eval, um, pm, ub, pb, depth + 1, params, points);
    }

    /// Splits a piece where its next image is discontinuous and maps each part.
    fn children_of(&self, idx: usize) -> Vec<SingularityPiece> {
        let p = &self.pieces[idx];
        let d = |u: f64| self.cut_function(self.eval(p.base, &p.branches, u));
        let width = p.u_hi - p.u_lo;
        let nudge = 1e-9 * width;
        // endpoints usually sit on a cut; sample just inside them
        let samples: Vec<(f64, f64)> = p
            .params
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let u = if i == 0 {
                    u + nudge
                } else if i + 1 == p.params.len() {
                    u - nudge
                } else {
                    u
                };
                (u, d(u))
            })
            .collect();

        let mut cuts = vec![p.u_lo];
        for w in samples.windows(2) {
            let ((ua, da), (ub, db)) = (w[0], w[1]);
            let (fa, fb) = (da.floor(), db.floor());
            if fa == fb {
                continue;
            }
            let (lo, hi) = (fa.min(fb), fa.max(fb));
            let mut level = lo + 1.0;
            let mut found = Vec::new();
            while level <= hi {
                found.push(bisect_crossing(&d, ua, da, ub, level));
                level += 1.0;
            }
            if fb < fa {
                found.sort_by(f64::total_cmp);
            }
            cuts.extend(found);
        }
        cuts.push(p.u_hi);

        let mut children = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < MIN_PIECE_WIDTH {
                continue;
            }
            let n = d(0.5 * (a + b)).floor();
            let mut branches = p.branches.clone();
            branches.push(n);
            children.push(self.sampled_piece(p.base, branches, a, b, Some(idx)));
        }
        children
    }

    /// Torus segments of all pieces, clipped to `[0,1] x [0,g]`.
    pub fn segments(&self) -> Vec<SingularitySegment> {
        let g = self.wall.g();
        let mut out = Vec::new();
        for piece in &self.pieces {
            for pts in clip_to_torus(&piece.points, g) {
                let slope_range = slope_range(&pts);
                out.push(SingularitySegment {
                    kind: self.kind,
                    generation: piece.level + 1,
                    points: pts,
                    slope_range,
                });
            }
        }
        out
    }

    /// Endpoints of pieces: points where curves of the set end on one
    /// another.
    pub fn endpoints(&self) -> Vec<TorusPoint> {
        let g = self.wall.g();
        let mut pts = Vec::new();
        for p in &self.pieces {
            for &(t, v) in [p.points[0], p.points[p.points.len() - 1]].iter() {
                pts.push(TorusPoint::reduce(t, v, g));
            }
        }
        pts
    }
}

fn bisect_crossing(d: &impl Fn(f64) -> f64, mut a: f64, da: f64, mut b: f64, level: f64) -> f64 {
    let below = da < level;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (d(m) < level) == below {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn slope_range(pts: &[TorusPoint]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for w in pts.windows(2) {
        let dt = w[1].t - w[0].t;
        let dv = w[1].v - w[0].v;
        if dt == 0.0 && dv == 0.0 {
            continue;
        }
        let s = if dt == 0.0 { f64::INFINITY } else { dv / dt };
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (lo, hi)
}

/// Cuts a lifted polyline along the lines `t ∈ Z`, `v ∈ gZ` and translates
/// each part into the closed fundamental domain.
fn clip_to_torus(points: &[(f64, f64)], g: f64) -> Vec<Vec<TorusPoint>> {
    let cell_of = |t: f64, v: f64| (t.floor(), (v / g).floor());
    let mut out: Vec<Vec<TorusPoint>> = Vec::new();
    let mut current: Vec<TorusPoint> = Vec::new();
    let mut current_cell: Option<(f64, f64)> = None;
    for w in points.windows(2) {
        let (p, q) = (w[0], w[1]);
        let mut lambdas = vec![0.0, 1.0];
        let (t_lo, t_hi) = (p.0.min(q.0), p.0.max(q.0));
        let mut k = t_lo.floor() + 1.0;
        while k < t_hi {
            lambdas.push((k - p.0) / (q.0 - p.0));
            k += 1.0;
        }
        let (v_lo, v_hi) = (p.1.min(q.1) / g, p.1.max(q.1) / g);
        let mut k = v_lo.floor() + 1.0;
        while k < v_hi {
            lambdas.push((k * g - p.1) / (q.1 - p.1));
            k += 1.0;
        }
        lambdas.sort_by(f64::total_cmp);
        for l in lambdas.windows(2) {
            let (la, lb) = (l[0], l[1]);
            if lb <= la {
                continue;
            }
            let at = |l: f64| (p.0 + l * (q.0 - p.0), p.1 + l * (q.1 - p.1));
            let mid = at(0.5 * (la + lb));
            let cell = cell_of(mid.0, mid.1);
            let shift = |x: (f64, f64)| TorusPoint {
                t: x.0 - cell.0,
                v: x.1 - cell.1 * g,
            };
            let a = shift(at(la));
            let b = shift(at(lb));
            if current_cell != Some(cell) {
                if current.len() > 1 {
                    out.push(std::mem::take(&mut current));
                }
                current.clear();
                current.push(a);
                current_cell = Some(cell);
            }
            current.push(b);
        }
    }
    if current.len() > 1 {
        out.push(current);
    }
    out
}

fn point_segment_distance(p: (f64, f64), a: TorusPoint, b: TorusPoint) -> f64 {
    let (dx, dy) = (b.t - a.t, b.v - a.v);
    let len2 = dx * dx + dy * dy;
    let l = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.t) * dx + (p.1 - a.v) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.t - l * dx).hypot(p.1 - a.v - l * dy)
}

/// Euclidean distance on the torus from `p` to the nearest segment.
pub fn distance_to_singularity(p: TorusPoint, segs: &[SingularitySegment], g: f64) -> f64 {
    let mut best = f64::INFINITY;
    for seg in segs {
        for w in seg.points.windows(2) {
            for i in -1..=1 {
                for j in -1..=1 {
                    let q = (p.t + i as f64, p.v + j as f64 * g);
                    best = best.min(point_segment_distance(q, w[0], w[1]));
                }
            }
        }
    }
    best
}

/// Points where at least two curves of `S_n⁺` meet, deduplicated to `1e-9`.
pub fn multiple_points(forest: &SingularityForest) -> Vec<TorusPoint> {
    let mut pts = forest.endpoints();
    pts.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.v.total_cmp(&b.v)));
    let mut out: Vec<TorusPoint> = Vec::new();
    for p in pts {
        if !out
            .iter()
            .rev()
            .take(8)
            .any(|q| (q.t - p.t).abs() < 1e-9 && (q.v - p.v).abs() < 1e-9)
        {
            out.push(p);
        }
    }
    out
}

/// Writes `which,generation,t,v` rows, one per polyline vertex.
pub fn write_singularity_csv<W: Write>(segs: &[SingularitySegment], mut out: W) -> io::Result<()> {
    writeln!(out, "which,generation,t,v")?;
    for seg in segs {
        for p in &seg.points {
            writeln!(
                out,
                "{},{},{},{}",
                seg.kind.label(),
                seg.generation,
                p.t,
                p.v
            )?;
        }
    }
    Ok(())
}
