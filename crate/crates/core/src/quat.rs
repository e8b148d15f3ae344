//! Real quaternion arithmetic.
//!
//! A [`Quaternion`] is `w + x·i + y·j + z·k`. Multiplication (`*`) is the
//! Hamilton product and is not commutative.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::direction::Direction;

/// Vector parts shorter than this are treated as zero by `exp`, `ln` and
/// `polar` (relative to the full norm where a norm is available).
const VECTOR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum QuatError {
    #[error("operation is undefined for the zero quaternion")]
    ZeroQuaternion,
    #[error("logarithm is undefined for a negative real quaternion")]
    UndefinedLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Self = Self::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Self = Self::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Self = Self::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Self = Self::new(0.0, 0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    #[inline]
    pub const fn real(w: f64) -> Self {
        Self::new(w, 0.0, 0.0, 0.0)
    }

    /// A quaternion with zero scalar part.
    #[inline]
    pub const fn pure(x: f64, y: f64, z: f64) -> Self {
        Self::new(0.0, x, y, z)
    }

    #[inline]
    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// The `(i, j, k)` coefficients.
    #[inline]
    pub fn vector(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Same vector part, scalar part dropped.
    #[inline]
    pub fn vector_part(self) -> Self {
        Self::pure(self.x, self.y, self.z)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn scale(self, lambda: f64) -> Self {
        Self::new(lambda * self.w, lambda * self.x, lambda * self.y, lambda * self.z)
    }

    /// Hamilton product `self ⊛ rhs`.
    #[inline]
    pub fn hamilton(self, rhs: Self) -> Self {
        let (a1, b1, c1, d1) = (self.w, self.x, self.y, self.z);
        let (a2, b2, c2, d2) = (rhs.w, rhs.x, rhs.y, rhs.z);
        Self::new(
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        )
    }

    #[inline]
    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    #[inline]
    pub fn dot(self, rhs: Self) -> f64 {
        self.w * rhs.w + self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.w.hypot(self.x).hypot(self.y.hypot(self.z))
    }

    /// Length of the vector part.
    #[inline]
    pub fn vector_norm(self) -> f64 {
        self.x.hypot(self.y).hypot(self.z)
    }

    /// `conj(q) / |q|²`, both a left and a right inverse.
    pub fn inverse(self) -> Result<Self, QuatError> {
        let n2 = self.norm_sqr();
        if n2 == 0.0 {
            return Err(QuatError::ZeroQuaternion);
        }
        Ok(self.conj().scale(1.0 / n2))
    }

    /// Right division `self ⊛ rhs⁻¹`.
    pub fn right_div(self, rhs: Self) -> Result<Self, QuatError> {
        Ok(self.hamilton(rhs.inverse()?))
    }

    /// `e^w (cos|v| + v/|v| sin|v|)`, with `sin|v|/|v| → 1` for a vanishing
    /// vector part.
    pub fn exp(self) -> Self {
        let v = self.vector_norm();
        let scale = self.w.exp();
        let sinc = if v < VECTOR_EPS { 1.0 } else { v.sin() / v };
        Self::new(
            scale * v.cos(),
            scale * sinc * self.x,
            scale * sinc * self.y,
            scale * sinc * self.z,
        )
    }

    /// Principal logarithm `ln|q| + arccos(w/|q|)/|v| · v`.
    pub fn ln(self) -> Result<Self, QuatError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(QuatError::ZeroQuaternion);
        }
        let v = self.vector_norm();
        if v == 0.0 && self.w < 0.0 {
            return Err(QuatError::UndefinedLog);
        }
        let log_norm = n.ln();
        if v < VECTOR_EPS * n && self.w > 0.0 {
            // arccos(w/|q|)/|v| → 1/|q| as the angle vanishes
            let k = 1.0 / n;
            return Ok(Self::new(log_norm, k * self.x, k * self.y, k * self.z));
        }
        let angle = (self.w / n).clamp(-1.0, 1.0).acos();
        let k = angle / v;
        Ok(Self::new(log_norm, k * self.x, k * self.y, k * self.z))
    }

    /// Real power through the polar form, `|q|ⁿ (cos nθ + axis·sin nθ)`,
    /// with θ ∈ [0, π].
    ///
    /// A negative real base has no unique axis; `i` is used, which matches the
    /// repeated product for integer exponents.
    pub fn powf(self, n: f64) -> Result<Self, QuatError> {
        if self.norm_sqr() == 0.0 {
            return if n > 0.0 {
                Ok(Self::ZERO)
            } else {
                Err(QuatError::ZeroQuaternion)
            };
        }
        let polar = self.polar()?;
        let axis = polar.axis.map_or(Self::I, Direction::to_quaternion);
        let (s, c) = (n * polar.angle).sin_cos();
        let r = polar.magnitude.powf(n);
        Ok(Self::real(r * c) + axis.scale(r * s))
    }

    pub fn polar(self) -> Result<PolarForm, QuatError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(QuatError::ZeroQuaternion);
        }
        let v = self.vector_norm();
        // atan2 stays accurate near 0 and π where acos(w/|q|) does not
        let angle = v.atan2(self.w);
        let axis = if v < VECTOR_EPS * n {
            None
        } else {
            Some(Direction::unit_unchecked(self.x / v, self.y / v, self.z / v))
        };
        Ok(PolarForm {
            magnitude: n,
            angle,
            axis,
        })
    }
}

/// `|q| (cos θ + axis·sin θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarForm {
    pub magnitude: f64,
    /// In `[0, π]`.
    pub angle: f64,
    /// `None` when the vector part vanishes (angle 0 or π).
    pub axis: Option<Direction>,
}

impl PolarForm {
    pub fn to_quaternion(&self) -> Quaternion {
        let (s, c) = self.angle.sin_cos();
        let axis = self.axis.map_or(Quaternion::ZERO, Direction::to_quaternion);
        Quaternion::real(self.magnitude * c) + axis.scale(self.magnitude * s)
    }

    pub fn is_axis_defined(&self) -> bool {
        self.axis.is_some()
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:+}i {:+}j {:+}k", self.w, self.x, self.y, self.z)
    }
}

impl Add for Quaternion {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.w + rhs.w, self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Quaternion {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for Quaternion {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.w - rhs.w, self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Quaternion {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Mul for Quaternion {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        self.hamilton(rhs)
    }
}

impl Mul<f64> for Quaternion {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

impl Mul<Quaternion> for f64 {
    type Output = Quaternion;
    #[inline]
    fn mul(self, rhs: Quaternion) -> Quaternion {
        rhs.scale(self)
    }
}

impl Div<f64> for Quaternion {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.scale(1.0 / rhs)
    }
}
