//! The 2D orthogonal planes split `q = q₊ + q₋` with
//! `q± = ½(q ± f⊛q⊛g)`.
//!
//! Under the map `q ↦ f⊛q⊛g` the `q₊` half is fixed and the `q₋` half changes
//! sign. For unit `f`, `g` the two halves lie in orthogonal 2D planes.

use std::fmt;
use std::str::FromStr;

use crate::direction::{Direction, DirectionError};
use crate::quat::Quaternion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn as_str(&self) -> &'static str {
        match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "plus" | "+" | "q+" => Ok(Sign::Plus),
            "minus" | "-" | "q-" => Ok(Sign::Minus),
            other => Err(format!("unknown sign {other:?}, expected plus or minus")),
        }
    }
}

/// One split map: the sign to keep and the `(f, g)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    sign: Sign,
    f: Direction,
    g: Direction,
}

impl SplitSpec {
    pub fn new(sign: Sign, f: Direction, g: Direction) -> Result<Self, DirectionError> {
        if f.is_zero() || g.is_zero() {
            return Err(DirectionError::ZeroDirection);
        }
        Ok(Self { sign, f, g })
    }

    /// The `f()f` map.
    pub fn symmetric(sign: Sign, f: Direction) -> Result<Self, DirectionError> {
        Self::new(sign, f, f)
    }

    /// `(sign, μ_i, μ_j)`.
    pub fn from_mu(sign: Sign, i: usize, j: usize) -> Result<Self, DirectionError> {
        Self::new(sign, Direction::mu(i)?, Direction::mu(j)?)
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn f(&self) -> Direction {
        self.f
    }

    pub fn g(&self) -> Direction {
        self.g
    }

    pub fn with_sign(self, sign: Sign) -> Self {
        Self { sign, ..self }
    }

    /// The selected half of `q`.
    #[inline]
    pub fn apply(&self, q: Quaternion) -> Quaternion {
        let (plus, minus) = split_pair(q, self.f, self.g);
        match self.sign {
            Sign::Plus => plus,
            Sign::Minus => minus,
        }
    }
}

/// `f ⊛ q ⊛ g`.
#[inline]
pub fn apply_map(q: Quaternion, f: Direction, g: Direction) -> Quaternion {
    f.to_quaternion() * (q * g.to_quaternion())
}

/// Both halves from a single evaluation of `f⊛q⊛g`.
///
/// `q₋` is taken as `q − q₊` and `q₊` is then re-derived as `q − q₋`, so the
/// two halves carry the rounding of one subtraction each and re-add to `q`
/// exactly whenever `q − q₋` is representable.
#[inline]
pub fn split_pair(q: Quaternion, f: Direction, g: Direction) -> (Quaternion, Quaternion) {
    let mapped = apply_map(q, f, g);
    let plus0 = (q + mapped).scale(0.5);
    let minus = q - plus0;
    let plus = q - minus;
    (plus, minus)
}

#[inline]
pub fn split(q: Quaternion, spec: &SplitSpec) -> Quaternion {
    spec.apply(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Quaternion, b: Quaternion, tol: f64) -> bool {
        (a - b).to_array().iter().all(|d| d.abs() <= tol)
    }

    fn mu(i: usize) -> Direction {
        Direction::mu(i).unwrap()
    }

    #[test]
    fn map_of_one_with_i_j_is_k() {
        let i = mu(1);
        let j = mu(2);
        assert_eq!(apply_map(Quaternion::ONE, i, j), Quaternion::K);
        let q = Quaternion::new(0.2, -0.7, 1.3, 0.4);
        assert!(close(apply_map(apply_map(q, i, j), i, j), q, 1e-15));
    }

    #[test]
    fn split_of_one_with_i_j() {
        let (plus, minus) = split_pair(Quaternion::ONE, mu(1), mu(2));
        assert_eq!(plus, Quaternion::new(0.5, 0.0, 0.0, 0.5));
        assert_eq!(minus, Quaternion::new(0.5, 0.0, 0.0, -0.5));
    }

    #[test]
    fn split_with_f_equal_g_equal_i() {
        // i⊛q⊛i = (−a, −b, c, d)
        let (a, b, c, d) = (0.25, -1.5, 2.0, 0.75);
        let q = Quaternion::new(a, b, c, d);
        assert_eq!(apply_map(q, mu(1), mu(1)), Quaternion::new(-a, -b, c, d));
        let (plus, minus) = split_pair(q, mu(1), mu(1));
        assert_eq!(plus, Quaternion::new(0.0, 0.0, c, d));
        assert_eq!(minus, Quaternion::new(a, b, 0.0, 0.0));
    }

    #[test]
    fn gray_pixel_lies_in_minus_half() {
        let mu7 = mu(7);
        for v in [0.0, 0.2, 0.5, 1.0] {
            let q = Quaternion::pure(v, v, v);
            let (plus, minus) = split_pair(q, mu7, mu7);
            assert!(close(plus, Quaternion::ZERO, 1e-15));
            assert!(close(minus, q, 1e-15));
        }
    }

    #[test]
    fn plus_is_invariant_under_map() {
        let q = Quaternion::new(0.3, 0.1, -0.8, 0.6);
        let (f, g) = (mu(5), mu(12));
        let (plus, minus) = split_pair(q, f, g);
        assert!(close(apply_map(plus, f, g), plus, 1e-15));
        assert!(close(apply_map(minus, f, g), -minus, 1e-15));
    }

    #[test]
    fn zero_direction_is_rejected() {
        let zero = Direction::raw(0.0, 0.0, 0.0).unwrap();
        assert_eq!(SplitSpec::symmetric(Sign::Plus, zero), Err(DirectionError::ZeroDirection));
        assert!(SplitSpec::new(Sign::Minus, mu(1), zero).is_err());
    }

    #[test]
    fn non_unit_directions_still_complete() {
        let ud = Direction::from_hex("#1E90FF").unwrap();
        let q = Quaternion::pure(0.4, 0.4, 0.4);
        let (plus, minus) = split_pair(q, ud, ud);
        assert_eq!(plus + minus, q);
    }

    #[test]
    fn sign_parsing() {
        assert_eq!("plus".parse::<Sign>().unwrap(), Sign::Plus);
        assert_eq!("minus".parse::<Sign>().unwrap(), Sign::Minus);
        assert!("both".parse::<Sign>().is_err());
    }

    fn unit_dir() -> impl Strategy<Value = Direction> {
        proptest::array::uniform3(-1.0f64..1.0)
            .prop_filter("non-degenerate", |v| v.iter().map(|c| c * c).sum::<f64>() > 1e-3)
            .prop_map(|v| Direction::unit(v[0], v[1], v[2]).unwrap())
    }

    fn quat() -> impl Strategy<Value = Quaternion> {
        proptest::array::uniform4(-1.0f64..1.0).prop_map(Quaternion::from_array)
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(q in quat(), f in unit_dir(), g in unit_dir()) {
            for sign in Sign::BOTH {
                let spec = SplitSpec::new(sign, f, g).unwrap();
                let once = spec.apply(q);
                prop_assert!(close(spec.apply(once), once, 1e-12));
            }
        }

        #[test]
        fn split_is_real_linear(p in quat(), q in quat(), lambda in -3.0f64..3.0, f in unit_dir(), g in unit_dir()) {
            for sign in Sign::BOTH {
                let spec = SplitSpec::new(sign, f, g).unwrap();
                let lhs = spec.apply(p.scale(lambda) + q);
                let rhs = spec.apply(p).scale(lambda) + spec.apply(q);
                prop_assert!(close(lhs, rhs, 1e-12));
            }
        }

        #[test]
        fn halves_are_cross_orthogonal(p in quat(), q in quat(), f in unit_dir(), g in unit_dir()) {
            let (pp, pm) = split_pair(p, f, g);
            let (qp, qm) = split_pair(q, f, g);
            prop_assert!(pp.dot(qm).abs() <= 1e-12);
            prop_assert!(pm.dot(qp).abs() <= 1e-12);
        }
    }
}
