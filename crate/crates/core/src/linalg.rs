//! Two-dimensional vector and matrix types.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Rejects NaN and infinite components.
    pub fn try_new(x: f64, y: f64) -> Result<Self> {
        let v = Self { x, y };
        v.ensure_finite()?;
        Ok(v)
    }

    pub fn ensure_finite(self) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::Domain(format!("non-finite vector ({}, {})", self.x, self.y)))
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn normalized(self) -> Vec2 {
        self.scale(1.0 / self.norm())
    }

    /// `(v₂, −v₁)`: clockwise rotation by a right angle.
    pub fn perp(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn from_slice(s: &[f64]) -> Vec2 {
        Vec2::new(s[0], s[1])
    }
}

/// Free-function form of [`Vec2::perp`].
pub fn perp(v: Vec2) -> Vec2 {
    v.perp()
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v.scale(self)
    }
}

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { m: [[1.0, 0.0], [0.0, 1.0]] };

    pub const fn new(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Self { m: [[m00, m01], [m10, m11]] }
    }

    pub fn try_new(m00: f64, m01: f64, m10: f64, m11: f64) -> Result<Self> {
        let m = Self::new(m00, m01, m10, m11);
        if m.m.iter().flatten().all(|v| v.is_finite()) {
            Ok(m)
        } else {
            Err(Error::Domain("non-finite matrix entry".into()))
        }
    }

    pub fn from_columns(c0: Vec2, c1: Vec2) -> Self {
        Self::new(c0.x, c1.x, c0.y, c1.y)
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.m[0][0] * v.x + self.m[0][1] * v.y, self.m[1][0] * v.x + self.m[1][1] * v.y)
    }

    pub fn mul_mat(&self, o: &Mat2) -> Mat2 {
        let a = &self.m;
        let b = &o.m;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2::new(self.m[1][1] / d, -self.m[0][1] / d, -self.m[1][0] / d, self.m[0][0] / d))
    }

    /// Symmetric part times two, `A + Aᵀ`.
    pub fn symmetrized(&self) -> Mat2 {
        let off = self.m[0][1] + self.m[1][0];
        Mat2::new(2.0 * self.m[0][0], off, off, 2.0 * self.m[1][1])
    }

    /// Real eigenvalues sorted by decreasing magnitude, or `None` when complex.
    pub fn real_eigenvalues(&self) -> Option<(f64, f64)> {
        let tr = self.trace();
        let det = self.det();
        let disc = 0.25 * tr * tr - det;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        // Larger-magnitude root first, smaller one from the product to avoid cancellation.
        let big = if tr >= 0.0 { 0.5 * tr + s } else { 0.5 * tr - s };
        if big == 0.0 {
            return Some((0.0, 0.0));
        }
        Some((big, det / big))
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}
