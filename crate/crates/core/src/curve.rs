//! Short curves used as test objects for the hyperbolic structure.

use serde::Serialize;

use crate::linalg::Vec2;

/// Graph `v = v_c + s (t - t_c) + c (t - t_c)^2 / 2` over `t - t_c ∈ [u_lo, u_hi]`,
/// in lifted (unreduced) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnstableCurve {
    pub center: (f64, f64),
    pub slope: f64,
    pub curvature: f64,
    pub u_lo: f64,
    pub u_hi: f64,
}

fn primitive(x: f64) -> f64 {
    0.5 * (x * (1.0 + x * x).sqrt() + x.asinh())
}

impl UnstableCurve {
    pub fn new(center: (f64, f64), slope: f64, curvature: f64, u_lo: f64, u_hi: f64) -> Self {
        Self {
            center,
            slope,
            curvature,
            u_lo,
            u_hi,
        }
    }

    /// Curve of approximately the given arclength, centered on `center`.
    pub fn with_length(center: (f64, f64), slope: f64, curvature: f64, length: f64) -> Self {
        let mut half = 0.5 * length / (1.0 + slope * slope).sqrt();
        let mut c = Self::new(center, slope, curvature, -half, half);
        // one Newton-like correction for the bending
        let l = c.length();
        if l > 0.0 {
            half *= length / l;
            c = Self::new(center, slope, curvature, -half, half);
        }
        c
    }

    #[inline]
    pub fn point(&self, u: f64) -> (f64, f64) {
        (
            self.center.0 + u,
            self.center.1 + u * (self.slope + 0.5 * self.curvature * u),
        )
    }

    #[inline]
    pub fn tangent(&self, u: f64) -> Vec2 {
        Vec2::new(1.0, self.slope + self.curvature * u)
    }

    /// Arclength between two parameters.
    pub fn arclength(&self, a: f64, b: f64) -> f64 {
        let c = self.curvature;
        if c.abs() < 1e-12 {
            let s = (1.0 + self.slope * self.slope).sqrt();
            return (b - a) * s;
        }
        (primitive(self.slope + c * b) - primitive(self.slope + c * a)) / c
    }

    pub fn length(&self) -> f64 {
        self.arclength(self.u_lo, self.u_hi)
    }

    pub fn sub(&self, u_lo: f64, u_hi: f64) -> Self {
        Self {
            u_lo,
            u_hi,
            ..*self
        }
    }

    /// `n + 1` equally spaced parameters.
    pub fn params(&self, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| self.u_lo + (self.u_hi - self.u_lo) * i as f64 / n as f64)
            .collect()
    }
}
