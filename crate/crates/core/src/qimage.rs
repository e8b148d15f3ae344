//! Images as grids of quaternions, channel extraction and 8-bit encoding.

use std::collections::BTreeMap;
use std::io::{Cursor, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, Rgb, RgbImage};

use crate::direction::{Direction, DirectionError, SampleRegion};
use crate::error::{QopsError, Result};
use crate::quat::Quaternion;
use crate::split::SplitSpec;

/// Spans narrower than this are treated as constant (no rescale).
pub const DEGENERATE_SPAN: f64 = 1e-12;

/// Map `f` over a slice, in parallel when the `parallel` feature is on.
pub(crate) fn par_map<T, U, F>(src: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        src.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        src.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuaternionImage {
    width: u32,
    height: u32,
    data: Vec<Quaternion>,
}

impl QuaternionImage {
    pub fn new(width: u32, height: u32, data: Vec<Quaternion>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(QopsError::InvalidParameter(format!(
                "{} pixels do not fill a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// `(r, g, b) ↦ (r/255)·i + (g/255)·j + (b/255)·k`.
    pub fn from_rgb(image: &RgbImage) -> Self {
        let data = image
            .pixels()
            .map(|p| Quaternion::pure(unit8(p[0]), unit8(p[1]), unit8(p[2])))
            .collect();
        Self {
            width: image.width(),
            height: image.height(),
            data,
        }
    }

    /// Places one channel threefold into `i`, `j` and `k`.
    pub fn from_gray_channel(channel: &ChannelImage) -> Self {
        Self {
            width: channel.width,
            height: channel.height,
            data: channel.values.iter().map(|&v| Quaternion::pure(v, v, v)).collect(),
        }
    }

    /// Zero scalar part, channels taken from three grids.
    pub fn from_channels(channels: &[ChannelImage; 3]) -> Result<Self> {
        let [r, g, b] = channels;
        for c in [g, b] {
            if (c.width, c.height) != (r.width, r.height) {
                return Err(QopsError::DimensionMismatch(r.width, r.height, c.width, c.height));
            }
        }
        let data = (0..r.values.len())
            .map(|n| Quaternion::pure(r.values[n], g.values[n], b.values[n]))
            .collect();
        Ok(Self {
            width: r.width,
            height: r.height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[Quaternion] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> Quaternion {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Pixelwise map; runs across threads with the `parallel` feature.
    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(Quaternion) -> Quaternion + Sync + Send,
    {
        Self {
            width: self.width,
            height: self.height,
            data: par_map(&self.data, |&q| f(q)),
        }
    }

    pub fn split(&self, spec: &SplitSpec) -> Self {
        self.map(|q| spec.apply(q))
    }

    pub fn zip_map<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(Quaternion, Quaternion) -> Quaternion,
    {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(QopsError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            data,
        })
    }

    /// The `i`, `j`, `k` coefficient grids; the scalar grid is dropped.
    pub fn extract_channels(&self) -> [ChannelImage; 3] {
        let pick = |c: usize| ChannelImage {
            width: self.width,
            height: self.height,
            values: self.data.iter().map(|q| q.vector()[c]).collect(),
        };
        [pick(0), pick(1), pick(2)]
    }

    /// Encodes to 8-bit RGB after discarding scalar parts.
    pub fn to_rgb(&self, normalize: &Normalize) -> RgbImage {
        let channels = self.extract_channels();
        let range = normalize.resolve(&channels);
        encode_rgb(&channels, &range)
    }
}

fn unit8(v: u8) -> f64 {
    f64::from(v) / 255.0
}

/// One real-valued channel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ChannelImage {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(QopsError::InvalidParameter(format!(
                "{} values do not fill a {width}x{height} grid",
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn from_gray(image: &GrayImage) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            values: image.pixels().map(|p| unit8(p[0])).collect(),
        }
    }

    /// One channel of an RGB raster, values kept on the 0..255 scale.
    pub fn raw_channel(image: &RgbImage, channel: usize) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            values: image.pixels().map(|p| f64::from(p[channel])).collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn bounds(&self) -> ChannelBounds {
        ChannelBounds::of(&self.values)
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Encodes with a fixed range and mode.
    pub fn to_gray(&self, bounds: ChannelBounds, truncate_only: bool) -> GrayImage {
        let mut out = GrayImage::new(self.width, self.height);
        for (px, &v) in out.pixels_mut().zip(&self.values) {
            px[0] = quantize(encode_value(v, bounds, truncate_only));
        }
        out
    }
}

/// Per-channel `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelBounds {
    pub min: f64,
    pub max: f64,
}

impl ChannelBounds {
    pub const UNIT: Self = Self { min: 0.0, max: 1.0 };

    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max < min {
            return Err(QopsError::InvalidParameter(format!("bad range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    /// Bounds of the finite values; `[0, 0]` when there are none.
    pub fn of(values: &[f64]) -> Self {
        values
            .iter()
            .filter(|v| v.is_finite())
            .fold(None, |acc: Option<Self>, &v| {
                Some(match acc {
                    None => Self { min: v, max: v },
                    Some(b) => Self {
                        min: b.min.min(v),
                        max: b.max.max(v),
                    },
                })
            })
            .unwrap_or(Self { min: 0.0, max: 0.0 })
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn is_degenerate(&self) -> bool {
        self.span() < DEGENERATE_SPAN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeMode {
    PerChannel,
    Joint,
    Truncate,
    Exemplar,
}

/// Resolved encoding ranges for the three channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationRange {
    pub mode: RangeMode,
    pub bounds: [ChannelBounds; 3],
}

impl NormalizationRange {
    pub fn truncate() -> Self {
        Self {
            mode: RangeMode::Truncate,
            bounds: [ChannelBounds::UNIT; 3],
        }
    }

    pub fn exemplar(bounds: [ChannelBounds; 3]) -> Self {
        Self {
            mode: RangeMode::Exemplar,
            bounds,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.mode != RangeMode::Truncate && self.bounds.iter().any(ChannelBounds::is_degenerate)
    }
}

/// How channels are mapped to `[0, 1]` before quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalize {
    /// Min-max per channel.
    PerChannel,
    /// One min-max over all three channels.
    Joint,
    /// Clamp to `[0, 1]` without rescaling.
    Truncate,
    /// Min-max with ranges fixed in advance, usually from an exemplar.
    Fixed(NormalizationRange),
}

impl Normalize {
    pub fn resolve(&self, channels: &[ChannelImage; 3]) -> NormalizationRange {
        match *self {
            Normalize::PerChannel => NormalizationRange {
                mode: RangeMode::PerChannel,
                bounds: [channels[0].bounds(), channels[1].bounds(), channels[2].bounds()],
            },
            Normalize::Joint => {
                let b = channels
                    .iter()
                    .map(ChannelImage::bounds)
                    .reduce(ChannelBounds::merge)
                    .unwrap_or(ChannelBounds::UNIT);
                NormalizationRange {
                    mode: RangeMode::Joint,
                    bounds: [b; 3],
                }
            }
            Normalize::Truncate => NormalizationRange::truncate(),
            Normalize::Fixed(range) => range,
        }
    }
}

/// Maps one value into `[0, 1]`. Degenerate ranges fall back to clamping.
#[inline]
pub fn encode_value(v: f64, bounds: ChannelBounds, truncate_only: bool) -> f64 {
    let t = if truncate_only || bounds.is_degenerate() {
        v
    } else {
        (v - bounds.min) / bounds.span()
    };
    t.clamp(0.0, 1.0)
}

/// `round(255·v)` for `v` in `[0, 1]`; NaN encodes as 0.
#[inline]
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        (255.0 * v.clamp(0.0, 1.0)).round() as u8
    }
}

/// Encodes three channels to RGB under a resolved range.
pub fn encode_rgb(channels: &[ChannelImage; 3], range: &NormalizationRange) -> RgbImage {
    let width = channels[0].width;
    let height = channels[0].height;
    let truncate_only = range.mode == RangeMode::Truncate;
    let mut out = RgbImage::new(width, height);
    for (n, px) in out.pixels_mut().enumerate() {
        for c in 0..3 {
            px[c] = quantize(encode_value(channels[c].values[n], range.bounds[c], truncate_only));
        }
    }
    out
}

/// Per-channel ranges of the split exemplar, to be reused across images.
pub fn exemplar_ranges(exemplar: &RgbImage, spec: &SplitSpec) -> Result<NormalizationRange> {
    if exemplar.width() == 0 || exemplar.height() == 0 {
        return Err(QopsError::EmptyImage);
    }
    let q = QuaternionImage::from_rgb(exemplar).split(spec);
    let ch = q.extract_channels();
    Ok(NormalizationRange::exemplar([ch[0].bounds(), ch[1].bounds(), ch[2].bounds()]))
}

/// Mean color of an inclusive pixel rectangle, as a direction.
pub fn sample_direction(image: &RgbImage, region: SampleRegion, normalize: bool) -> Result<Direction> {
    let (x0, x1) = (region.x0.min(region.x1), region.x0.max(region.x1));
    let (y0, y1) = (region.y0.min(region.y1), region.y0.max(region.y1));
    if x1 >= image.width() || y1 >= image.height() {
        return Err(DirectionError::Parse {
            input: format!("sample:{x0},{y0}:{x1},{y1}"),
            reason: format!("outside the {}x{} image", image.width(), image.height()),
        }
        .into());
    }
    let mut sum = [0.0f64; 3];
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = image.get_pixel(x, y);
            for c in 0..3 {
                sum[c] += unit8(p[c]);
            }
        }
    }
    let n = f64::from((x1 - x0 + 1) * (y1 - y0 + 1));
    let d = Direction::raw(sum[0] / n, sum[1] / n, sum[2] / n)?;
    Ok(if normalize { d.normalized()? } else { d })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GamutSpace {
    Rgb,
    Hsv,
}

impl std::str::FromStr for GamutSpace {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(GamutSpace::Rgb),
            "hsv" => Ok(GamutSpace::Hsv),
            other => Err(format!("unknown color space {other:?}, expected rgb or hsv")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GamutPoint {
    pub coords: [f64; 3],
    pub count: u64,
}

/// One point per distinct 24-bit color, ordered by packed RGB value.
pub fn export_gamut(image: &RgbImage, space: GamutSpace) -> Vec<GamutPoint> {
    let mut counts: BTreeMap<[u8; 3], u64> = BTreeMap::new();
    for p in image.pixels() {
        *counts.entry(p.0).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(rgb, count)| {
            let unit = [unit8(rgb[0]), unit8(rgb[1]), unit8(rgb[2])];
            let coords = match space {
                GamutSpace::Rgb => unit,
                GamutSpace::Hsv => rgb_to_hsv(unit),
            };
            GamutPoint { coords, count }
        })
        .collect()
}

pub fn write_gamut_csv<W: Write>(mut out: W, points: &[GamutPoint]) -> std::io::Result<()> {
    writeln!(out, "c1,c2,c3,count")?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.coords[0], p.coords[1], p.coords[2], p.count)?;
    }
    Ok(())
}

/// Hexcone HSV with hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let hue = if hue >= 360.0 { hue - 360.0 } else { hue };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    [hue, sat, max]
}

/// Reads a PNG (or any format the `image` crate sniffs) as 24-bit RGB.
/// Grayscale is lifted to RGB; alpha and 16-bit rasters are rejected.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let wrap = |source| QopsError::Image {
        path: path.to_path_buf(),
        source,
    };
    let img = ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| wrap(image::ImageError::IoError(e)))?
        .decode()
        .map_err(wrap)?;
    match img {
        DynamicImage::ImageRgb8(rgb) => Ok(rgb),
        DynamicImage::ImageLuma8(gray) => Ok(DynamicImage::ImageLuma8(gray).to_rgb8()),
        DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgba8(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgba16(_)
        | DynamicImage::ImageRgba32F(_) => Err(QopsError::AlphaUnsupported(path.to_path_buf())),
        _ => Err(QopsError::UnsupportedDepth(path.to_path_buf())),
    }
}

/// PNG bytes of an RGB or grayscale raster.
pub fn encode_png(image: &DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    image
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|source| QopsError::Image {
            path: "<memory>".into(),
            source,
        })?;
    Ok(buf.into_inner())
}

/// Lifts an 8-bit gray raster to RGB.
pub fn gray_to_rgb(gray: &GrayImage) -> RgbImage {
    RgbImage::from_fn(gray.width(), gray.height(), |x, y| {
        let v = gray.get_pixel(x, y)[0];
        Rgb([v, v, v])
    })
}
