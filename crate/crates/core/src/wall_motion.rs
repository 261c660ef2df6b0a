//! One-periodic, piecewise-polynomial wall height profiles.
//!
//! A profile is a list of polynomial pieces covering `[0, 1)` in absolute
//! (reduced) time. Inside `(0, 1)` the height must be continuous up to the
//! second derivative; the only allowed singularity is the corner at integer
//! times where `f'(0+) != f'(1-)`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::Poly;

const MAX_COEFFS: usize = 6;
const PERIODICITY_TOL: f64 = 1e-12;
const SMOOTHNESS_TOL: f64 = 1e-9;
const CORNER_TOL: f64 = 1e-12;

/// Which one-sided limit to take at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Height and its first three time derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallState {
    pub height: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    lo: f64,
    hi: f64,
    f: Poly,
    df: Poly,
    d2f: Poly,
    d3f: Poly,
}

impl Piece {
    pub fn new(lo: f64, hi: f64, coeffs: &[f64]) -> Self {
        let f = Poly::new(coeffs);
        let df = f.derivative();
        let d2f = df.derivative();
        let d3f = d2f.derivative();
        Self {
            lo,
            hi,
            f,
            df,
            d2f,
            d3f,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn coeffs(&self) -> &[f64] {
        self.f.coeffs()
    }

    #[inline]
    fn state(&self, x: f64) -> WallState {
        WallState {
            height: self.f.eval(x),
            velocity: self.df.eval(x),
            acceleration: self.d2f.eval(x),
            jerk: self.d3f.eval(x),
        }
    }
}

/// Admissibility class of a wall motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `f'' > 0` everywhere.
    PositiveConvex,
    /// `f'' < -g` everywhere.
    StronglyConcave,
    NotAdmissible,
}

impl Regime {
    pub fn is_admissible(self) -> bool {
        self != Regime::NotAdmissible
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::PositiveConvex => "positive-convex",
            Regime::StronglyConcave => "strongly-concave",
            Regime::NotAdmissible => "not-admissible",
        };
        f.write_str(s)
    }
}

/// Exact bounds of the profile and its derivatives over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub height_min: f64,
    pub height_max: f64,
    /// `max |f'|`
    pub slope_max: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// `max |f'''|`
    pub jerk_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    NonPositiveGravity(f64),
    Empty,
    TooManyCoefficients { piece: usize, count: usize },
    NonFinite { piece: usize },
    Coverage(String),
    ValuePeriodicity { left: f64, right: f64 },
    Discontinuity { at: f64, order: u8, jump: f64 },
    NoCorner { slope: f64 },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::NonPositiveGravity(g) => {
                write!(f, "gravity must be positive (g = {g})")
            }
            ValidationIssue::Empty => write!(f, "profile has no pieces"),
            ValidationIssue::TooManyCoefficients { piece, count } => {
                write!(
                    f,
                    "piece {piece} has {count} coefficients (max {MAX_COEFFS})"
                )
            }
            ValidationIssue::NonFinite { piece } => write!(f, "piece {piece} has non-finite data"),
            ValidationIssue::Coverage(msg) => write!(f, "pieces do not cover [0,1): {msg}"),
            ValidationIssue::ValuePeriodicity { left, right } => {
                write!(
                    f,
                    "value-periodicity violated: f(0+) = {left}, f(1-) = {right}"
                )
            }
            ValidationIssue::Discontinuity { at, order, jump } => {
                write!(
                    f,
                    "derivative of order {order} jumps by {jump:e} at t = {at}"
                )
            }
            ValidationIssue::NoCorner { slope } => {
                write!(f, "no corner: model degenerate (f'(0+) = f'(1-) = {slope})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    /// `(f'(0+), f'(1-))` when computable.
    pub corner_slopes: Option<(f64, f64)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("valid");
        }
        let msgs: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        f.write_str(&msgs.join("; "))
    }
}

/// Piecewise-polynomial, one-periodic wall motion together with gravity.
#[derive(Debug, Clone, PartialEq)]
pub struct WallMotion {
    pieces: Vec<Piece>,
    g: f64,
    bounds: Bounds,
}

impl WallMotion {
    /// Builds a profile and rejects it unless every invariant holds.
    pub fn new(g: f64, pieces: Vec<Piece>) -> Result<Self> {
        let wall = Self::new_unchecked(g, pieces);
        let report = wall.validate();
        if report.is_valid() {
            Ok(wall)
        } else {
            Err(Error::InvalidProfile(report))
        }
    }

    /// Builds a profile without validating it. Intended for diagnostics;
    /// the dynamics assume a valid profile.
    pub fn new_unchecked(g: f64, pieces: Vec<Piece>) -> Self {
        let bounds = compute_bounds(&pieces);
        Self { pieces, g, bounds }
    }

    /// `Q(k)`: `f(t) = k (t^2 - t) / 2`, so `f'' = k`.
    pub fn quadratic(k: f64, g: f64) -> Self {
        Self::new_unchecked(g, vec![Piece::new(0.0, 1.0, &[0.0, -0.5 * k, 0.5 * k])])
    }

    /// `N(c)`: `f(t) = c (t - t^2) / 2`, so `f'' = -c`.
    pub fn concave(c: f64, g: f64) -> Self {
        Self::new_unchecked(g, vec![Piece::new(0.0, 1.0, &[0.0, 0.5 * c, -0.5 * c])])
    }

    /// `S(e)`: `Q(1)` plus the cubic bump `e t (t - 1/2)(t - 1)`; `f'' = 1 + e (6t - 3)`
    /// varies along the period and `f''' = 6e`.
    pub fn skewed(e: f64, g: f64) -> Self {
        Self::new_unchecked(
            g,
            vec![Piece::new(
                0.0,
                1.0,
                &[0.0, -0.5 + 0.5 * e, 0.5 - 1.5 * e, e],
            )],
        )
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Right-continuous evaluation of the periodic extension.
    #[inline]
    pub fn eval(&self, t: f64) -> WallState {
        self.eval_side(t, Side::Right)
    }

    /// One-sided evaluation; the sides differ only at breakpoints.
    pub fn eval_side(&self, t: f64, side: Side) -> WallState {
        let mut x = t - t.floor();
        if x >= 1.0 {
            x = 0.0;
        }
        if side == Side::Left && x == 0.0 {
            return self.pieces[self.pieces.len() - 1].state(1.0);
        }
        let idx = self.piece_index(x);
        if side == Side::Left && idx > 0 && x == self.pieces[idx].lo {
            return self.pieces[idx - 1].state(x);
        }
        self.pieces[idx].state(x)
    }

    /// Evaluates the polynomial branch valid on `[n, n + 1]`, continued past
    /// the ends by the first and last pieces. Used to take one-sided limits
    /// at integer times without branching on rounding.
    pub fn eval_branch(&self, t: f64, n: f64) -> WallState {
        let x = t - n;
        if x <= 0.0 {
            self.pieces[0].state(x)
        } else if x >= 1.0 {
            self.pieces[self.pieces.len() - 1].state(x)
        } else {
            self.pieces[self.piece_index(x)].state(x)
        }
    }

    /// Both one-sided limits when `t` sits on a breakpoint whose velocity
    /// jumps (the corner); `None` elsewhere.
    pub fn corner_limits(&self, t: f64) -> Option<(WallState, WallState)> {
        let left = self.eval_side(t, Side::Left);
        let right = self.eval_side(t, Side::Right);
        ((left.velocity - right.velocity).abs() > CORNER_TOL).then_some((left, right))
    }

    #[inline]
    pub fn velocity(&self, t: f64) -> f64 {
        self.eval(t).velocity
    }

    #[inline]
    pub fn acceleration(&self, t: f64) -> f64 {
        self.eval(t).acceleration
    }

    #[inline]
    fn piece_index(&self, x: f64) -> usize {
        if self.pieces.len() == 1 {
            return 0;
        }
        // last piece with lo <= x
        match self.pieces.partition_point(|p| p.lo <= x) {
            0 => 0,
            n => n - 1,
        }
    }

    pub fn classify_regime(&self) -> Regime {
        if self.bounds.k_min > 0.0 {
            Regime::PositiveConvex
        } else if self.bounds.k_max < -self.g {
            Regime::StronglyConcave
        } else {
            Regime::NotAdmissible
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        if !(self.g > 0.0 && self.g.is_finite()) {
            issues.push(ValidationIssue::NonPositiveGravity(self.g));
        }
        if self.pieces.is_empty() {
            issues.push(ValidationIssue::Empty);
            return ValidationReport {
                issues,
                corner_slopes: None,
            };
        }
        for (i, p) in self.pieces.iter().enumerate() {
            if p.f.coeffs().len() > MAX_COEFFS {
                issues.push(ValidationIssue::TooManyCoefficients {
                    piece: i,
                    count: p.f.coeffs().len(),
                });
            }
            if !(p.lo.is_finite() && p.hi.is_finite() && p.f.coeffs().iter().all(|c| c.is_finite()))
            {
                issues.push(ValidationIssue::NonFinite { piece: i });
            }
        }
        if self.pieces[0].lo != 0.0 {
            issues.push(ValidationIssue::Coverage(format!(
                "first piece starts at {}",
                self.pieces[0].lo
            )));
        }
        let last = &self.pieces[self.pieces.len() - 1];
        if last.hi != 1.0 {
            issues.push(ValidationIssue::Coverage(format!(
                "last piece ends at {}",
                last.hi
            )));
        }
        for (i, p) in self.pieces.iter().enumerate() {
            if p.lo >= p.hi {
                issues.push(ValidationIssue::Coverage(format!(
                    "piece {i} is empty: [{}, {})",
                    p.lo, p.hi
                )));
            }
        }
        for w in self.pieces.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.hi != b.lo {
                let kind = if a.hi > b.lo { "overlap" } else { "gap" };
                issues.push(ValidationIssue::Coverage(format!(
                    "{kind} between {} and {}",
                    a.hi, b.lo
                )));
                continue;
            }
            let (l, r) = (a.state(a.hi), b.state(b.lo));
            let jumps = [
                (0u8, l.height - r.height),
                (1, l.velocity - r.velocity),
                (2, l.acceleration - r.acceleration),
            ];
            for (order, jump) in jumps {
                if jump.abs() > SMOOTHNESS_TOL {
                    issues.push(ValidationIssue::Discontinuity {
                        at: a.hi,
                        order,
                        jump,
                    });
                }
            }
        }

        let start = self.pieces[0].state(self.pieces[0].lo);
        let end = last.state(last.hi);
        if (start.height - end.height).abs() > PERIODICITY_TOL {
            issues.push(ValidationIssue::ValuePeriodicity {
                left: start.height,
                right: end.height,
            });
        }
        if (start.velocity - end.velocity).abs() <= CORNER_TOL {
            issues.push(ValidationIssue::NoCorner {
                slope: start.velocity,
            });
        }
        ValidationReport {
            issues,
            corner_slopes: Some((start.velocity, end.velocity)),
        }
    }

    /// Serializes to the line-oriented profile format.
    pub fn to_profile_text(&self) -> String {
        let mut out = format!("g = {}\n", self.g);
        for p in &self.pieces {
            out.push_str(&format!("piece {} {}", p.lo, p.hi));
            for c in p.coeffs() {
                out.push_str(&format!(" {c}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the profile format:
    ///
    /// ```text
    /// g = 2
    /// piece 0 1 0 -0.5 0.5
    /// ```
    ///
    /// Blank lines and `#` comments are ignored. Up to six coefficients
    /// `c0 .. c5` per piece, in powers of absolute time.
    pub fn parse_profile(text: &str) -> Result<Self> {
        let mut g: Option<f64> = None;
        let mut pieces = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("piece") {
                let nums = rest
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>()
                            .map_err(|_| err(format!("bad number '{tok}'")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if nums.len() < 3 {
                    return Err(err(
                        "piece needs t_lo, t_hi and at least one coefficient".into()
                    ));
                }
                if nums.len() > 2 + MAX_COEFFS {
                    return Err(err(format!("at most {MAX_COEFFS} coefficients per piece")));
                }
                pieces.push(Piece::new(nums[0], nums[1], &nums[2..]));
            } else if let Some((key, value)) = line.split_once('=') {
                if key.trim() != "g" {
                    return Err(err(format!("unknown key '{}'", key.trim())));
                }
                if g.is_some() {
                    return Err(err("g given twice".into()));
                }
                let v = value.trim();
                g = Some(
                    v.parse::<f64>()
                        .map_err(|_| err(format!("bad number '{v}'")))?,
                );
            } else {
                return Err(err(format!("unrecognized line '{line}'")));
            }
        }
        let g = g.ok_or(Error::Parse {
            line: 0,
            message: "missing 'g = <float>'".into(),
        })?;
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        Self::new(g, pieces)
    }

    /// Looks up a built-in family member such as `Q(1)`, `N(2)` or `S(0.2)`.
    pub fn builtin(name: &str, g: f64) -> Option<Self> {
        let name = name.trim();
        let open = name.find('(')?;
        let param: f64 = name[open + 1..].strip_suffix(')')?.trim().parse().ok()?;
        match &name[..open] {
            "Q" => Some(Self::quadratic(param, g)),
            "N" => Some(Self::concave(param, g)),
            "S" => Some(Self::skewed(param, g)),
            _ => None,
        }
    }
}

impl FromStr for WallMotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_profile(s)
    }
}

fn compute_bounds(pieces: &[Piece]) -> Bounds {
    let mut b = Bounds {
        height_min: f64::INFINITY,
        height_max: f64::NEG_INFINITY,
        slope_max: 0.0,
        k_min: f64::INFINITY,
        k_max: f64::NEG_INFINITY,
        jerk_max: 0.0,
    };
    for p in pieces {
        if !(p.lo < p.hi) {
            continue;
        }
        let (hmin, hmax) = p.f.range_on(p.lo, p.hi);
        let (smin, smax) = p.df.range_on(p.lo, p.hi);
        let (kmin, kmax) = p.d2f.range_on(p.lo, p.hi);
        let (jmin, jmax) = p.d3f.range_on(p.lo, p.hi);
        b.height_min = b.height_min.min(hmin);
        b.height_max = b.height_max.max(hmax);
        b.slope_max = b.slope_max.max(smin.abs()).max(smax.abs());
        b.k_min = b.k_min.min(kmin);
        b.k_max = b.k_max.max(kmax);
        b.jerk_max = b.jerk_max.max(jmin.abs()).max(jmax.abs());
    }
    b
}

/// Built-in profile families, as shown by `list-profiles`.
pub fn catalog() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "Q(k)",
            "f(t) = k(t^2 - t)/2, f'' = k; positive-convex for k > 0",
        ),
        (
            "N(c)",
            "f(t) = c(t - t^2)/2, f'' = -c; strongly-concave when c > g",
        ),
        (
            "S(e)",
            "Q(1) + e t(t - 1/2)(t - 1), f'' = 1 + e(6t - 3); positive-convex for |e| < 1/3",
        ),
    ]
}
