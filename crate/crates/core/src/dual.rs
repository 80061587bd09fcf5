//! Forward-mode dual numbers over a small fixed tangent width.
//!
//! Pose fitting differentiates with respect to at most
//! [`MAX_PARAMS`] parameters, so every dual carries a fixed-size tangent
//! array and the active parameter count is plain metadata. Branch
//! decisions (nearest edge, inside/outside, clamps) are taken on values
//! only, giving the usual piecewise derivatives.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Widest supported parameter vector (the 5-DoF pose model).
pub const MAX_PARAMS: usize = 5;

/// Tangent of a scalar with respect to the active pose parameters.
pub type Tangent = [f64; MAX_PARAMS];

pub const ZERO_TANGENT: Tangent = [0.0; MAX_PARAMS];

/// Dual scalar: value plus tangent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: Tangent,
}

impl Dual {
    /// Constant (zero tangent).
    #[inline]
    pub fn constant(v: f64) -> Self {
        Dual {
            re: v,
            eps: ZERO_TANGENT,
        }
    }

    /// Independent variable seeded in slot `slot`.
    #[inline]
    pub fn variable(v: f64, slot: usize) -> Self {
        let mut eps = ZERO_TANGENT;
        eps[slot] = 1.0;
        Dual { re: v, eps }
    }

    #[inline]
    pub fn new(re: f64, eps: Tangent) -> Self {
        Dual { re, eps }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.eps.iter().all(|e| e.is_finite())
    }

    /// Chain rule for a univariate function: `f(self)` given `f'(self)`.
    #[inline]
    fn lift(self, value: f64, derivative: f64) -> Dual {
        let mut eps = ZERO_TANGENT;
        for i in 0..MAX_PARAMS {
            eps[i] = derivative * self.eps[i];
        }
        Dual { re: value, eps }
    }

    #[inline]
    pub fn sqrt(self) -> Dual {
        let s = self.re.sqrt();
        // Subgradient 0 at the origin keeps sqrt(0) usable.
        let d = if s > 0.0 { 0.5 / s } else { 0.0 };
        self.lift(s, d)
    }

    #[inline]
    pub fn ln(self) -> Dual {
        self.lift(self.re.ln(), 1.0 / self.re)
    }

    #[inline]
    pub fn exp(self) -> Dual {
        let e = self.re.exp();
        self.lift(e, e)
    }

    #[inline]
    pub fn powf(self, p: f64) -> Dual {
        let v = self.re.powf(p);
        self.lift(v, p * self.re.powf(p - 1.0))
    }

    #[inline]
    pub fn sin(self) -> Dual {
        self.lift(self.re.sin(), self.re.cos())
    }

    #[inline]
    pub fn cos(self) -> Dual {
        self.lift(self.re.cos(), -self.re.sin())
    }

    /// Logistic sigmoid, numerically stable on both tails.
    #[inline]
    pub fn sigmoid(self) -> Dual {
        let s = sigmoid(self.re);
        self.lift(s, s * (1.0 - s))
    }

    /// Clamp on the value. Outside the range the tangent is zeroed
    /// (the clamp subgradient).
    #[inline]
    pub fn clamp(self, lo: f64, hi: f64) -> Dual {
        if self.re < lo {
            Dual::constant(lo)
        } else if self.re > hi {
            Dual::constant(hi)
        } else {
            self
        }
    }

    /// `max(self, 0)` hinge with zero tangent on the inactive side.
    #[inline]
    pub fn relu(self) -> Dual {
        if self.re > 0.0 {
            self
        } else {
            Dual::constant(0.0)
        }
    }

    #[inline]
    pub fn square(self) -> Dual {
        self * self
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl From<f64> for Dual {
    fn from(v: f64) -> Self {
        Dual::constant(v)
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: Dual) -> Dual {
        let mut eps = self.eps;
        for i in 0..MAX_PARAMS {
            eps[i] += rhs.eps[i];
        }
        Dual {
            re: self.re + rhs.re,
            eps,
        }
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, rhs: Dual) {
        self.re += rhs.re;
        for i in 0..MAX_PARAMS {
            self.eps[i] += rhs.eps[i];
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: Dual) -> Dual {
        let mut eps = self.eps;
        for i in 0..MAX_PARAMS {
            eps[i] -= rhs.eps[i];
        }
        Dual {
            re: self.re - rhs.re,
            eps,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        let mut eps = ZERO_TANGENT;
        for i in 0..MAX_PARAMS {
            eps[i] = self.eps[i] * rhs.re + self.re * rhs.eps[i];
        }
        Dual {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: f64) -> Dual {
        let mut eps = self.eps;
        for e in &mut eps {
            *e *= rhs;
        }
        Dual {
            re: self.re * rhs,
            eps,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.re;
        let mut eps = ZERO_TANGENT;
        for i in 0..MAX_PARAMS {
            eps[i] = (self.eps[i] - self.re * inv * rhs.eps[i]) * inv;
        }
        Dual {
            re: self.re * inv,
            eps,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        let mut eps = self.eps;
        for e in &mut eps {
            *e = -*e;
        }
        Dual { re: -self.re, eps }
    }
}

/// 3-vector of duals; the minimal vector algebra the renderer and losses
/// need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DVec3 {
    pub x: Dual,
    pub y: Dual,
    pub z: Dual,
}

impl DVec3 {
    #[inline]
    pub fn new(x: Dual, y: Dual, z: Dual) -> Self {
        DVec3 { x, y, z }
    }

    #[inline]
    pub fn constant(v: crate::math::Vec3) -> Self {
        DVec3 {
            x: Dual::constant(v.x),
            y: Dual::constant(v.y),
            z: Dual::constant(v.z),
        }
    }

    /// Value part with the given per-coordinate tangents.
    #[inline]
    pub fn from_parts(v: crate::math::Vec3, dx: Tangent, dy: Tangent, dz: Tangent) -> Self {
        DVec3 {
            x: Dual::new(v.x, dx),
            y: Dual::new(v.y, dy),
            z: Dual::new(v.z, dz),
        }
    }

    #[inline]
    pub fn value(&self) -> crate::math::Vec3 {
        crate::math::Vec3::new(self.x.re, self.y.re, self.z.re)
    }

    #[inline]
    pub fn dot(&self, o: &DVec3) -> Dual {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(&self, o: &DVec3) -> DVec3 {
        DVec3 {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    #[inline]
    pub fn norm_squared(&self) -> Dual {
        self.dot(self)
    }

    #[inline]
    pub fn scale(&self, s: Dual) -> DVec3 {
        DVec3 {
            x: self.x * s,
            y: self.y * s,
            z: self.z * s,
        }
    }
}

impl Add for DVec3 {
    type Output = DVec3;
    #[inline]
    fn add(self, o: DVec3) -> DVec3 {
        DVec3 {
            x: self.x + o.x,
            y: self.y + o.y,
            z: self.z + o.z,
        }
    }
}

impl Sub for DVec3 {
    type Output = DVec3;
    #[inline]
    fn sub(self, o: DVec3) -> DVec3 {
        DVec3 {
            x: self.x - o.x,
            y: self.y - o.y,
            z: self.z - o.z,
        }
    }
}

/// 2-vector of duals for screen-space work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DVec2 {
    pub x: Dual,
    pub y: Dual,
}

impl DVec2 {
    #[inline]
    pub fn new(x: Dual, y: Dual) -> Self {
        DVec2 { x, y }
    }

    #[inline]
    pub fn dot(&self, o: &DVec2) -> Dual {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn norm_squared(&self) -> Dual {
        self.dot(self)
    }

    #[inline]
    pub fn scale(&self, s: Dual) -> DVec2 {
        DVec2 {
            x: self.x * s,
            y: self.y * s,
        }
    }
}

impl Add for DVec2 {
    type Output = DVec2;
    #[inline]
    fn add(self, o: DVec2) -> DVec2 {
        DVec2 {
            x: self.x + o.x,
            y: self.y + o.y,
        }
    }
}

impl Sub for DVec2 {
    type Output = DVec2;
    #[inline]
    fn sub(self, o: DVec2) -> DVec2 {
        DVec2 {
            x: self.x - o.x,
            y: self.y - o.y,
        }
    }
}

/// Per-vertex position derivatives with respect to the active pose
/// parameters, as produced by the pose models and consumed by the
/// rasterizer and losses.
#[derive(Debug, Clone)]
pub struct MeshTangents {
    /// One tangent triple per mesh vertex; slots past `active` are zero.
    pub per_vertex: Vec<[crate::math::Vec3; MAX_PARAMS]>,
    /// Number of active pose parameters (4 or 5).
    pub active: usize,
}

impl MeshTangents {
    pub fn zeros(vertex_count: usize, active: usize) -> Self {
        MeshTangents {
            per_vertex: vec![[crate::math::Vec3::zeros(); MAX_PARAMS]; vertex_count],
            active,
        }
    }
}

/// Deterministic pairwise-tree sum: the result depends only on the slice
/// contents and order, never on thread count.
pub fn pairwise_sum(values: &[Dual]) -> Dual {
    match values.len() {
        0 => Dual::constant(0.0),
        1 => values[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Pairwise-tree sum over plain floats.
pub fn pairwise_sum_f64(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            pairwise_sum_f64(&values[..mid]) + pairwise_sum_f64(&values[mid..])
        }
    }
}
