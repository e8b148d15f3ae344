//! Stain vectors: Macenko estimation from optical density, and a
//! Beer-Lambert forward model for synthesizing stained images.

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::direction::Direction;
use crate::error::{QopsError, Result};
use crate::qimage::{quantize, ChannelImage};
use crate::split::{Sign, SplitSpec};

pub const OD_EPS: f64 = 1e-6;

/// Second principal direction must carry at least this share of the first
/// eigenvalue, otherwise the cloud is treated as rank one.
const RANK_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalDensityImage {
    width: u32,
    height: u32,
    data: Vec<[f64; 3]>,
}

impl OpticalDensityImage {
    /// `OD = max(0, −ln(v + ε))` per channel, `v` in `[0, 1]`.
    pub fn from_rgb(image: &RgbImage) -> Self {
        let od = |c: u8| (-(f64::from(c) / 255.0 + OD_EPS).ln()).max(0.0);
        Self {
            width: image.width(),
            height: image.height(),
            data: image.pixels().map(|p| [od(p[0]), od(p[1]), od(p[2])]).collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StainSource {
    Mu7,
    Macenko,
    Manual,
}

/// Split directions for stain separation. `s3` is only used by manual
/// three-stain setups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StainBasis {
    pub s1: Direction,
    pub s2: Direction,
    pub s3: Option<Direction>,
    pub source: StainSource,
}

impl StainBasis {
    /// The `f()f` map with `f = μ7`.
    pub fn mu7() -> Self {
        let mu7 = Direction::gray_axis();
        Self {
            s1: mu7,
            s2: mu7,
            s3: None,
            source: StainSource::Mu7,
        }
    }

    pub fn manual(s1: Direction, s2: Direction) -> Result<Self> {
        if s1.is_zero() || s2.is_zero() {
            return Err(QopsError::InvalidParameter("stain vectors must be nonzero".into()));
        }
        Ok(Self {
            s1,
            s2,
            s3: None,
            source: StainSource::Manual,
        })
    }

    pub fn swapped(self) -> Self {
        Self {
            s1: self.s2,
            s2: self.s1,
            ..self
        }
    }

    /// `q₊` with `(f, g) = (s1, s2)`.
    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec::new(Sign::Plus, self.s1, self.s2).expect("stain vectors are nonzero")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacenkoParams {
    /// Pixels with OD norm below this are treated as background.
    pub od_threshold: f64,
    /// Robust extreme angles are taken at this percentile and its complement.
    pub percentile: f64,
}

impl Default for MacenkoParams {
    fn default() -> Self {
        Self {
            od_threshold: 0.15,
            percentile: 1.0,
        }
    }
}

/// Two unit stain vectors, ordered so `s1` has the larger red OD component.
pub fn estimate_macenko(image: &RgbImage, params: &MacenkoParams) -> Result<StainBasis> {
    if !(0.0..50.0).contains(&params.percentile) {
        return Err(QopsError::InvalidParameter(format!(
            "percentile {} must be in [0, 50)",
            params.percentile
        )));
    }
    let od = OpticalDensityImage::from_rgb(image);
    let tissue: Vec<Vector3<f64>> = od
        .pixels()
        .iter()
        .map(|&v| Vector3::from(v))
        .filter(|v| v.norm() >= params.od_threshold)
        .collect();
    if tissue.len() < 2 {
        return Err(QopsError::DegenerateStains(format!(
            "{} pixels above the OD threshold {}",
            tissue.len(),
            params.od_threshold
        )));
    }

    // Uncentered second moments: a centered covariance loses the plane when
    // the image holds just two flat stain populations.
    let moments = tissue.iter().fold(Matrix3::zeros(), |m, v| m + v * v.transpose()) / tissue.len() as f64;
    let eig = SymmetricEigen::new(moments);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if l1 <= 0.0 || l2 / l1 < RANK_RATIO {
        return Err(QopsError::DegenerateStains(format!(
            "optical density cloud is rank one (eigenvalue ratio {:.2e})",
            (l2 / l1).max(0.0)
        )));
    }
    let e1 = sign_fixed(eig.eigenvectors.column(order[0]).into_owned());
    let e2 = sign_fixed(eig.eigenvectors.column(order[1]).into_owned());

    let mut angles: Vec<f64> = tissue.iter().map(|v| v.dot(&e2).atan2(v.dot(&e1))).collect();
    angles.sort_by(f64::total_cmp);
    let lo = percentile(&angles, params.percentile);
    let hi = percentile(&angles, 100.0 - params.percentile);
    let a = to_direction(e1 * lo.cos() + e2 * lo.sin())?;
    let b = to_direction(e1 * hi.cos() + e2 * hi.sin())?;
    let (s1, s2) = if a.x() >= b.x() { (a, b) } else { (b, a) };
    Ok(StainBasis {
        s1,
        s2,
        s3: None,
        source: StainSource::Macenko,
    })
}

/// Largest-magnitude component made positive.
fn sign_fixed(v: Vector3<f64>) -> Vector3<f64> {
    let big = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
    if big < 0.0 {
        -v
    } else {
        v
    }
}

fn to_direction(v: Vector3<f64>) -> Result<Direction> {
    // stain vectors are absorbances; point them into the positive octant
    let v = if v.sum() < 0.0 { -v } else { v };
    Ok(Direction::unit(v.x, v.y, v.z)?)
}

/// Linear interpolation between closest ranks of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let i = rank.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    let t = rank - i as f64;
    sorted[i] + t * (sorted[j] - sorted[i])
}

/// `round(255·exp(−(c1·v1 + c2·v2)))` per channel.
pub fn forward_model(v1: [f64; 3], v2: [f64; 3], c1: &ChannelImage, c2: &ChannelImage) -> Result<RgbImage> {
    if (c1.width(), c1.height()) != (c2.width(), c2.height()) {
        return Err(QopsError::DimensionMismatch(c1.width(), c1.height(), c2.width(), c2.height()));
    }
    if c1.values().iter().chain(c2.values()).any(|&c| !(c >= 0.0 && c.is_finite())) {
        return Err(QopsError::InvalidParameter("concentrations must be finite and nonnegative".into()));
    }
    let w = c1.width();
    Ok(RgbImage::from_fn(w, c1.height(), |x, y| {
        let (a, b) = (c1.get(x, y), c2.get(x, y));
        let px = |c: usize| quantize((-(a * v1[c] + b * v2[c])).exp());
        Rgb([px(0), px(1), px(2)])
    }))
}

/// Angle in degrees between two nonzero 3-vectors.
pub fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (va, vb) = (Vector3::from(a), Vector3::from(b));
    let c = (va.dot(&vb) / (va.norm() * vb.norm())).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    fn checkerboard(w: u32, h: u32, amount: f64) -> (ChannelImage, ChannelImage) {
        let a: Vec<f64> = (0..w * h).map(|n| if (n % w + n / w).is_multiple_of(2) { amount } else { 0.0 }).collect();
        let b: Vec<f64> = a.iter().map(|&v| if v > 0.0 { 0.0 } else { amount }).collect();
        (ChannelImage::new(w, h, a).unwrap(), ChannelImage::new(w, h, b).unwrap())
    }

    #[test]
    fn zero_concentration_is_white() {
        let z = ChannelImage::new(3, 3, vec![0.0; 9]).unwrap();
        let img = forward_model([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], &z, &z).unwrap();
        assert!(img.pixels().all(|p| p.0 == [255, 255, 255]));
    }

    #[test]
    fn single_stain_od_aligns_with_its_vector() {
        let v1 = unit([0.65, 0.70, 0.29]);
        let c1 = ChannelImage::new(4, 4, vec![0.8; 16]).unwrap();
        let c2 = ChannelImage::new(4, 4, vec![0.0; 16]).unwrap();
        let img = forward_model(v1, [0.0, 0.0, 1.0], &c1, &c2).unwrap();
        for od in OpticalDensityImage::from_rgb(&img).pixels() {
            assert!(angle_deg(*od, v1) < 1.0);
        }
    }

    #[test]
    fn checkerboard_recovers_both_vectors() {
        let v1 = unit([0.65, 0.70, 0.29]);
        let v2 = unit([0.07, 0.99, 0.11]);
        let (c1, c2) = checkerboard(16, 16, 1.0);
        let img = forward_model(v1, v2, &c1, &c2).unwrap();
        let basis = estimate_macenko(&img, &MacenkoParams::default()).unwrap();
        assert_eq!(basis.source, StainSource::Macenko);
        assert!(angle_deg(basis.s1.to_array(), v1) < 5.0);
        assert!(angle_deg(basis.s2.to_array(), v2) < 5.0);
        assert!(basis.s1.is_unit() && basis.s2.is_unit());
    }

    #[test]
    fn degenerate_inputs() {
        let single = RgbImage::from_pixel(8, 8, Rgb([120, 60, 200]));
        assert!(matches!(
            estimate_macenko(&single, &MacenkoParams::default()),
            Err(QopsError::DegenerateStains(_))
        ));
        let white = RgbImage::from_pixel(8, 8, Rgb([255, 255, 255]));
        assert!(matches!(
            estimate_macenko(&white, &MacenkoParams::default()),
            Err(QopsError::DegenerateStains(_))
        ));
    }

    #[test]
    fn pixel_order_does_not_matter() {
        let v1 = unit([0.65, 0.70, 0.29]);
        let v2 = unit([0.27, 0.57, 0.78]);
        let (c1, c2) = checkerboard(10, 10, 0.9);
        let img = forward_model(v1, v2, &c1, &c2).unwrap();
        let flipped = image::imageops::rotate180(&img);
        let a = estimate_macenko(&img, &MacenkoParams::default()).unwrap();
        let b = estimate_macenko(&flipped, &MacenkoParams::default()).unwrap();
        assert!(angle_deg(a.s1.to_array(), b.s1.to_array()) < 1e-9);
        assert!(angle_deg(a.s2.to_array(), b.s2.to_array()) < 1e-9);
    }

    #[test]
    fn swap_and_manual() {
        let b = StainBasis::manual(Direction::mu(1).unwrap(), Direction::mu(2).unwrap()).unwrap();
        let s = b.swapped();
        assert_eq!(s.s1, b.s2);
        assert_eq!(s.split_spec().f(), b.s2);
        assert!(StainBasis::manual(Direction::raw(0.0, 0.0, 0.0).unwrap(), b.s1).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 0.0);
        assert_eq!(percentile(&v, 50.0), 2.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert!((percentile(&v, 10.0) - 0.4).abs() < 1e-15);
    }
}
