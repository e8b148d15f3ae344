//! Large-image and dataset plumbing: the 91 catalog combinations, batch
//! transformation with exemplar ranges, tiled execution and the scaling
//! benchmark.

use std::fs;
use std::hint::black_box;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::imageops::{self, FilterType};
use image::{DynamicImage, RgbImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{QopsError, Result};
use crate::qimage::{
    encode_png, encode_value, exemplar_ranges, load_rgb, par_map, quantize, ChannelBounds, NormalizationRange,
    Normalize, QuaternionImage, RangeMode,
};
use crate::quat::Quaternion;
use crate::split::{Sign, SplitSpec};
use crate::workflows::ContrastParams;

pub const CATALOG_SIZE: usize = 13;
pub const BENCH_MIN_SIDE: u32 = 64;

/// `(sign, μ_i, μ_j)` with `i ≤ j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComboSpec {
    pub sign: Sign,
    pub i: usize,
    pub j: usize,
}

impl ComboSpec {
    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec::from_mu(self.sign, self.i, self.j).expect("indices come from the catalog")
    }

    /// File-name friendly tag, e.g. `minus_mu3_mu8`.
    pub fn tag(&self) -> String {
        format!("{}_mu{}_mu{}", self.sign, self.i, self.j)
    }
}

/// The 13 `f()f` maps and 78 pairs `i < j`, in lexicographic order.
pub fn enumerate_combinations(sign: Sign) -> Vec<ComboSpec> {
    (1..=CATALOG_SIZE)
        .flat_map(|i| (i..=CATALOG_SIZE).map(move |j| ComboSpec { sign, i, j }))
        .collect()
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub inputs: Vec<PathBuf>,
    pub exemplar: RgbImage,
    pub signs: Vec<Sign>,
    pub out_dir: PathBuf,
    /// Share of outputs removed at random afterwards, e.g. 0.5.
    pub delete_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub input: String,
    pub combo: ComboSpec,
    pub output: String,
    pub range: NormalizationRange,
}

#[derive(Debug, Default)]
pub struct BatchReport {
    pub rows: Vec<ManifestRow>,
    pub deleted: Vec<String>,
    pub errors: Vec<(PathBuf, QopsError)>,
}

/// PNG files of a directory, sorted by name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn file_label(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Re-colorizes every input under every combination of the requested signs,
/// each encoded with ranges taken from the exemplar. Per-file failures are
/// collected and the run continues. Writes `manifest.csv` into `out_dir`.
pub fn batch_transform(opts: &BatchOptions) -> Result<BatchReport> {
    if opts.exemplar.width() == 0 || opts.exemplar.height() == 0 {
        return Err(QopsError::EmptyImage);
    }
    if !(0.0..=1.0).contains(&opts.delete_fraction) {
        return Err(QopsError::InvalidParameter(format!(
            "delete fraction {} is outside [0, 1]",
            opts.delete_fraction
        )));
    }
    fs::create_dir_all(&opts.out_dir)?;
    let mut signs = opts.signs.clone();
    signs.sort();
    signs.dedup();
    let combos: Vec<(ComboSpec, NormalizationRange)> = signs
        .iter()
        .flat_map(|&s| enumerate_combinations(s))
        .map(|c| exemplar_ranges(&opts.exemplar, &c.split_spec()).map(|r| (c, r)))
        .collect::<Result<_>>()?;

    let per_file = par_map(&opts.inputs, |path| -> Result<Vec<ManifestRow>> {
        let image = load_rgb(path)?;
        let q = QuaternionImage::from_rgb(&image);
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut rows = Vec::with_capacity(combos.len());
        for (combo, range) in &combos {
            let out = q.split(&combo.split_spec()).to_rgb(&Normalize::Fixed(*range));
            let name = format!("{stem}_{}.png", combo.tag());
            fs::write(opts.out_dir.join(&name), encode_png(&DynamicImage::ImageRgb8(out))?)?;
            rows.push(ManifestRow {
                input: file_label(path),
                combo: *combo,
                output: name,
                range: *range,
            });
        }
        Ok(rows)
    });

    let mut report = BatchReport::default();
    for (path, result) in opts.inputs.iter().zip(per_file) {
        match result {
            Ok(rows) => report.rows.extend(rows),
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                report.errors.push((path.clone(), e));
            }
        }
    }

    let drop = (opts.delete_fraction * report.rows.len() as f64).round() as usize;
    if drop > 0 {
        let mut idx: Vec<usize> = (0..report.rows.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
        let mut gone = vec![false; report.rows.len()];
        for &i in &idx[..drop] {
            gone[i] = true;
            fs::remove_file(opts.out_dir.join(&report.rows[i].output))?;
        }
        let rows = std::mem::take(&mut report.rows);
        for (row, g) in rows.into_iter().zip(gone) {
            if g {
                report.deleted.push(row.output);
            } else {
                report.rows.push(row);
            }
        }
    }

    let mut manifest = fs::File::create(opts.out_dir.join("manifest.csv"))?;
    write_manifest(&mut manifest, &report.rows)?;
    Ok(report)
}

pub fn write_manifest<W: Write>(mut out: W, rows: &[ManifestRow]) -> std::io::Result<()> {
    writeln!(out, "input,sign,f,g,output,min_r,max_r,min_g,max_g,min_b,max_b")?;
    for r in rows {
        let b = &r.range.bounds;
        writeln!(
            out,
            "{},{},mu{},mu{},{},{},{},{},{},{},{}",
            r.input, r.combo.sign, r.combo.i, r.combo.j, r.output, b[0].min, b[0].max, b[1].min, b[1].max, b[2].min, b[2].max
        )?;
    }
    Ok(())
}

/// A per-pixel quaternion map for tiled execution.
pub trait PixelMap: Sync {
    fn map_pixel(&self, q: Quaternion) -> Quaternion;
}

impl PixelMap for SplitSpec {
    fn map_pixel(&self, q: Quaternion) -> Quaternion {
        self.apply(q)
    }
}

impl PixelMap for ContrastParams {
    fn map_pixel(&self, q: Quaternion) -> Quaternion {
        // cannot fail once channels are floored; NaN encodes as 0 regardless
        self.apply(q).unwrap_or(Quaternion::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN))
    }
}

impl<F: Fn(Quaternion) -> Quaternion + Sync> PixelMap for F {
    fn map_pixel(&self, q: Quaternion) -> Quaternion {
        self(q)
    }
}

struct Tile {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

struct TileOut {
    data: Vec<[f64; 3]>,
    bounds: [ChannelBounds; 3],
}

/// Maps and encodes an image tile by tile. Image-global ranges are merged
/// from per-tile minima and maxima before encoding, so the result does not
/// depend on `tile_size`.
pub fn tile_apply<M: PixelMap + ?Sized>(image: &RgbImage, map: &M, normalize: &Normalize, tile_size: u32) -> Result<RgbImage> {
    if tile_size == 0 {
        return Err(QopsError::InvalidParameter("tile size must be at least 1".into()));
    }
    let (w, h) = image.dimensions();
    let tiles: Vec<Tile> = (0..h.div_ceil(tile_size))
        .flat_map(|ty| {
            (0..w.div_ceil(tile_size)).map(move |tx| {
                let (x, y) = (tx * tile_size, ty * tile_size);
                Tile {
                    x,
                    y,
                    w: tile_size.min(w - x),
                    h: tile_size.min(h - y),
                }
            })
        })
        .collect();

    let outs: Vec<TileOut> = par_map(&tiles, |t| {
        let mut data = Vec::with_capacity((t.w * t.h) as usize);
        for y in t.y..t.y + t.h {
            for x in t.x..t.x + t.w {
                let p = image.get_pixel(x, y);
                let q = Quaternion::pure(f64::from(p[0]) / 255.0, f64::from(p[1]) / 255.0, f64::from(p[2]) / 255.0);
                data.push(map.map_pixel(q).vector());
            }
        }
        let bounds = std::array::from_fn(|c| ChannelBounds::of(&data.iter().map(|v| v[c]).collect::<Vec<_>>()));
        TileOut { data, bounds }
    });

    let range = match *normalize {
        Normalize::Fixed(r) => r,
        Normalize::Truncate => NormalizationRange::truncate(),
        Normalize::PerChannel | Normalize::Joint => {
            let mut b = outs
                .iter()
                .filter(|o| !o.data.is_empty())
                .map(|o| o.bounds)
                .reduce(|a, b| std::array::from_fn(|c| a[c].merge(b[c])))
                .unwrap_or([ChannelBounds::UNIT; 3]);
            let mode = if *normalize == Normalize::Joint {
                let j = b[0].merge(b[1]).merge(b[2]);
                b = [j; 3];
                RangeMode::Joint
            } else {
                RangeMode::PerChannel
            };
            NormalizationRange { mode, bounds: b }
        }
    };

    let truncate_only = range.mode == RangeMode::Truncate;
    let mut out = RgbImage::new(w, h);
    for (t, o) in tiles.iter().zip(&outs) {
        let mut it = o.data.iter();
        for y in t.y..t.y + t.h {
            for x in t.x..t.x + t.w {
                let v = it.next().expect("tile data matches tile size");
                let px = out.get_pixel_mut(x, y);
                for c in 0..3 {
                    px[c] = quantize(encode_value(v[c], range.bounds[c], truncate_only));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub pixels: u64,
    pub seconds_plus: f64,
    pub seconds_minus: f64,
    /// Mean of the two signs.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub records: Vec<BenchRecord>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub steps: usize,
    /// Each size is timed this many times per sign; the fastest run counts.
    pub repeats: usize,
    pub image_id: String,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            steps: 20,
            repeats: 3,
            image_id: "image".into(),
        }
    }
}

/// Sizes of the 5% shrink schedule: step `s` scales both sides by `1 − 0.05·s`.
pub fn bench_sizes(width: u32, height: u32, steps: usize) -> Result<Vec<(u32, u32)>> {
    (0..steps)
        .map(|s| {
            let f = 1.0 - 0.05 * s as f64;
            let (w, h) = ((f64::from(width) * f).round() as u32, (f64::from(height) * f).round() as u32);
            if w < BENCH_MIN_SIDE || h < BENCH_MIN_SIDE {
                Err(QopsError::ImageTooSmall { width: w, height: h })
            } else {
                Ok((w, h))
            }
        })
        .collect()
}

fn time_split(q: &QuaternionImage, spec: &SplitSpec, repeats: usize) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let mut acc = Quaternion::ZERO;
        for &p in q.pixels() {
            acc += spec.apply(black_box(p));
        }
        black_box(acc);
        best = best.min(start.elapsed().as_secs_f64());
    }
    best
}

/// Times the split on bicubic-shrunk copies of `image` and fits
/// `seconds = slope·pixels + intercept`. Only the split itself is timed, on
/// one thread.
pub fn bench_time_complexity(image: &RgbImage, spec: &SplitSpec, opts: &BenchOptions) -> Result<BenchResult> {
    if opts.steps < 5 {
        return Err(QopsError::InvalidParameter(format!("at least 5 steps required, got {}", opts.steps)));
    }
    let sizes = bench_sizes(image.width(), image.height(), opts.steps)?;
    let plus = spec.with_sign(Sign::Plus);
    let minus = spec.with_sign(Sign::Minus);
    let mut records = Vec::with_capacity(sizes.len());
    for (w, h) in sizes {
        let scaled = if (w, h) == image.dimensions() {
            image.clone()
        } else {
            imageops::resize(image, w, h, FilterType::CatmullRom)
        };
        let q = QuaternionImage::from_rgb(&scaled);
        let sp = time_split(&q, &plus, opts.repeats);
        let sm = time_split(&q, &minus, opts.repeats);
        log::debug!("{w}x{h}: {sp:.6}s plus, {sm:.6}s minus");
        records.push(BenchRecord {
            image_id: opts.image_id.clone(),
            width: w,
            height: h,
            pixels: u64::from(w) * u64::from(h),
            seconds_plus: sp,
            seconds_minus: sm,
            seconds: (sp + sm) / 2.0,
        });
    }
    let xs: Vec<f64> = records.iter().map(|r| r.pixels as f64).collect();
    let ys: Vec<f64> = records.iter().map(|r| r.seconds).collect();
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(BenchResult {
        records,
        slope,
        intercept,
        r_squared,
    })
}

/// Least-squares line through `(x, y)`: `(slope, intercept, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

/// `pixels,seconds` rows followed by the `slope,intercept,r2` summary.
pub fn write_bench_csv<W: Write>(mut out: W, result: &BenchResult) -> std::io::Result<()> {
    writeln!(out, "pixels,seconds")?;
    for r in &result.records {
        writeln!(out, "{},{:.9}", r.pixels, r.seconds)?;
    }
    writeln!(out, "slope,intercept,r2")?;
    writeln!(out, "{:e},{:e},{:.6}", result.slope, result.intercept, result.r_squared)
}
