//! Pure quaternion directions: the μ catalog, user colors and stain vectors.

use std::fmt;
use std::str::FromStr;

use crate::quat::Quaternion;

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DirectionError {
    #[error("catalog index {0} is outside 1..=13")]
    IndexOutOfRange(usize),
    #[error("direction has zero length")]
    ZeroDirection,
    #[error("direction coefficients must be finite")]
    NonFinite,
    #[error("cannot parse direction {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

/// A pure quaternion `x·i + y·j + z·k`.
///
/// `unit` records whether the vector was normalized; non-unit directions are
/// meaningful for re-staining colors and stain-matrix columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
    unit: bool,
}

impl Direction {
    /// A raw (non-normalized) direction. Zero vectors are allowed here and
    /// rejected when a split is constructed.
    pub fn raw(x: f64, y: f64, z: f64) -> Result<Self, DirectionError> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(DirectionError::NonFinite);
        }
        let len = (x * x + y * y + z * z).sqrt();
        Ok(Self {
            x,
            y,
            z,
            unit: (len - 1.0).abs() <= UNIT_TOL,
        })
    }

    /// The normalized direction of `(x, y, z)`.
    pub fn unit(x: f64, y: f64, z: f64) -> Result<Self, DirectionError> {
        Self::raw(x, y, z)?.normalized()
    }

    pub(crate) fn unit_unchecked(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, unit: true }
    }

    pub fn normalized(self) -> Result<Self, DirectionError> {
        let len = self.length();
        if len == 0.0 {
            return Err(DirectionError::ZeroDirection);
        }
        Ok(Self::unit_unchecked(self.x / len, self.y / len, self.z / len))
    }

    /// `#RRGGBB` as the raw direction `(R, G, B) / 255`.
    pub fn from_hex(hex: &str) -> Result<Self, DirectionError> {
        let rgb = parse_hex(hex)?;
        Self::from_rgb8(rgb)
    }

    pub fn from_rgb8(rgb: [u8; 3]) -> Result<Self, DirectionError> {
        Self::raw(
            f64::from(rgb[0]) / 255.0,
            f64::from(rgb[1]) / 255.0,
            f64::from(rgb[2]) / 255.0,
        )
    }

    /// Catalog entry μ₁..μ₁₃.
    pub fn mu(index: usize) -> Result<Self, DirectionError> {
        let (x, y, z) = match index {
            1 => (1.0, 0.0, 0.0),
            2 => (0.0, 1.0, 0.0),
            3 => (0.0, 0.0, 1.0),
            4 => (1.0, 1.0, 0.0),
            5 => (1.0, 0.0, 1.0),
            6 => (0.0, 1.0, 1.0),
            7 => (1.0, 1.0, 1.0),
            8 => (-1.0, 1.0, 0.0),
            9 => (-1.0, 0.0, 1.0),
            10 => (0.0, -1.0, 1.0),
            11 => (-1.0, 1.0, 1.0),
            12 => (1.0, -1.0, 1.0),
            13 => (1.0, 1.0, -1.0),
            _ => return Err(DirectionError::IndexOutOfRange(index)),
        };
        Self::unit(x, y, z)
    }

    /// The gray-line (luminance) axis μ₇.
    pub fn gray_axis() -> Self {
        let c = 1.0 / 3f64.sqrt();
        Self::unit_unchecked(c, c, c)
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.z
    }

    #[inline]
    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn is_unit(&self) -> bool {
        self.unit
    }

    pub fn length(&self) -> f64 {
        self.x.hypot(self.y).hypot(self.z)
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.z == 0.0
    }

    #[inline]
    pub fn to_quaternion(self) -> Quaternion {
        Quaternion::pure(self.x, self.y, self.z)
    }
}

impl From<Direction> for Quaternion {
    fn from(d: Direction) -> Self {
        d.to_quaternion()
    }
}

fn parse_error(input: &str, reason: impl Into<String>) -> DirectionError {
    DirectionError::Parse {
        input: input.to_owned(),
        reason: reason.into(),
    }
}

fn parse_hex(input: &str) -> Result<[u8; 3], DirectionError> {
    let digits = input
        .strip_prefix('#')
        .ok_or_else(|| parse_error(input, "hex colors start with '#'"))?;
    if digits.len() != 6 || !digits.is_ascii() {
        return Err(parse_error(input, "expected six hex digits"));
    }
    let mut rgb = [0u8; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        *out = u8::from_str_radix(&digits[2 * c..2 * c + 2], 16)
            .map_err(|e| parse_error(input, e.to_string()))?;
    }
    Ok(rgb)
}

/// A pixel rectangle (inclusive corners) sampled from an input image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRegion {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

/// Textual form of a direction, as accepted on the command line:
/// `muN`, `x,y,z`, `#RRGGBB` or `sample:X,Y[:X2,Y2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirectionSpec {
    Mu(usize),
    Triple([f64; 3]),
    Hex([u8; 3]),
    Sample(SampleRegion),
}

impl DirectionSpec {
    /// Resolves everything except pixel sampling, which needs an image (see
    /// [`crate::qimage::sample_direction`]). Triples are normalized only when
    /// `normalize` is set; catalog entries are always unit.
    pub fn resolve(&self, normalize: bool) -> Result<Direction, DirectionError> {
        let d = match *self {
            DirectionSpec::Mu(i) => return Direction::mu(i),
            DirectionSpec::Triple([x, y, z]) => Direction::raw(x, y, z)?,
            DirectionSpec::Hex(rgb) => Direction::from_rgb8(rgb)?,
            DirectionSpec::Sample(_) => {
                return Err(parse_error(&self.to_string(), "pixel sampling needs an input image"))
            }
        };
        if normalize {
            d.normalized()
        } else {
            Ok(d)
        }
    }
}

impl fmt::Display for DirectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectionSpec::Mu(i) => write!(f, "mu{i}"),
            DirectionSpec::Triple([x, y, z]) => write!(f, "{x},{y},{z}"),
            DirectionSpec::Hex([r, g, b]) => write!(f, "#{r:02X}{g:02X}{b:02X}"),
            DirectionSpec::Sample(r) if r.x0 == r.x1 && r.y0 == r.y1 => {
                write!(f, "sample:{},{}", r.x0, r.y0)
            }
            DirectionSpec::Sample(r) => write!(f, "sample:{},{}:{},{}", r.x0, r.y0, r.x1, r.y1),
        }
    }
}

fn parse_point(input: &str, part: &str) -> Result<(u32, u32), DirectionError> {
    let (x, y) = part
        .split_once(',')
        .ok_or_else(|| parse_error(input, "expected X,Y"))?;
    let x = x.trim().parse().map_err(|_| parse_error(input, "bad X coordinate"))?;
    let y = y.trim().parse().map_err(|_| parse_error(input, "bad Y coordinate"))?;
    Ok((x, y))
}

impl FromStr for DirectionSpec {
    type Err = DirectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Some(idx) = t.strip_prefix("mu") {
            let i: usize = idx.parse().map_err(|_| parse_error(s, "expected muN"))?;
            if !(1..=13).contains(&i) {
                return Err(DirectionError::IndexOutOfRange(i));
            }
            return Ok(DirectionSpec::Mu(i));
        }
        if t.starts_with('#') {
            return parse_hex(t).map(DirectionSpec::Hex);
        }
        if let Some(rest) = t.strip_prefix("sample:") {
            let mut parts = rest.split(':');
            let first = parts.next().unwrap_or_default();
            let (x0, y0) = parse_point(s, first)?;
            let (x1, y1) = match parts.next() {
                Some(p) => parse_point(s, p)?,
                None => (x0, y0),
            };
            if parts.next().is_some() {
                return Err(parse_error(s, "at most two corners"));
            }
            return Ok(DirectionSpec::Sample(SampleRegion {
                x0: x0.min(x1),
                y0: y0.min(y1),
                x1: x0.max(x1),
                y1: y0.max(y1),
            }));
        }
        let parts: Vec<&str> = t.split(',').collect();
        if parts.len() != 3 {
            return Err(parse_error(s, "expected muN, x,y,z, #RRGGBB or sample:X,Y"));
        }
        let mut v = [0.0f64; 3];
        for (out, p) in v.iter_mut().zip(&parts) {
            *out = p
                .trim()
                .parse()
                .map_err(|_| parse_error(s, format!("bad number {p:?}")))?;
            if !out.is_finite() {
                return Err(DirectionError::NonFinite);
            }
        }
        Ok(DirectionSpec::Triple(v))
    }
}
