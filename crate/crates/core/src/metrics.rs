//! Channel statistics used by the P2b grayscale encoding, and reference
//! image-quality metrics.

use image::{ImageBuffer, Pixel};

use crate::error::{QopsError, Result};
use crate::qimage::ChannelImage;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

/// Norms and mean of one channel holding 0..255 values, each divided by 255.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    /// Maximum absolute column sum; a column is one `x` over all rows.
    pub norm1: f64,
    /// Largest singular value.
    pub norm2: f64,
    pub frobenius: f64,
    pub mean: f64,
}

pub fn channel_stats(cc: &ChannelImage) -> Result<ChannelStats> {
    let (w, h) = (cc.width() as usize, cc.height() as usize);
    if w == 0 || h == 0 {
        return Err(QopsError::EmptyImage);
    }
    let a = cc.values();
    let mut col_sums = vec![0.0f64; w];
    let mut sum = 0.0;
    let mut sq = 0.0;
    for row in a.chunks_exact(w) {
        for (s, &v) in col_sums.iter_mut().zip(row) {
            *s += v.abs();
            sum += v;
            sq += v * v;
        }
    }
    let norm1 = col_sums.into_iter().fold(0.0, f64::max);
    Ok(ChannelStats {
        norm1: norm1 / 255.0,
        norm2: spectral_norm(a, h, w) / 255.0,
        frobenius: sq.sqrt() / 255.0,
        mean: sum / (w * h) as f64 / 255.0,
    })
}

/// `σ_max` of a row-major `rows × cols` matrix by power iteration on `AᵀA`,
/// starting from the all-ones vector.
pub fn spectral_norm(a: &[f64], rows: usize, cols: usize) -> f64 {
    debug_assert_eq!(a.len(), rows * cols);
    let mut v = vec![1.0f64; cols];
    let mut av = vec![0.0f64; rows];
    let mut w = vec![0.0f64; cols];
    let mut lambda = 0.0f64;
    for _ in 0..POWER_MAX_ITER {
        for (r, out) in av.iter_mut().enumerate() {
            *out = a[r * cols..(r + 1) * cols].iter().zip(&v).map(|(x, y)| x * y).sum();
        }
        w.iter_mut().for_each(|x| *x = 0.0);
        for (r, &s) in av.iter().enumerate() {
            for (o, x) in w.iter_mut().zip(&a[r * cols..(r + 1) * cols]) {
                *o += x * s;
            }
        }
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let next = v.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>() / vv;
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        v.iter_mut().zip(&w).for_each(|(x, y)| *x = y / wn);
        let done = (next - lambda).abs() <= POWER_TOL * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

fn check_dims<P: Pixel<Subpixel = u8>>(
    a: &ImageBuffer<P, Vec<u8>>,
    b: &ImageBuffer<P, Vec<u8>>,
) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(QopsError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    if a.width() == 0 || a.height() == 0 {
        return Err(QopsError::EmptyImage);
    }
    Ok(())
}

/// Mean squared error on `[0, 1]`-scaled samples.
pub fn mse<P: Pixel<Subpixel = u8>>(a: &ImageBuffer<P, Vec<u8>>, b: &ImageBuffer<P, Vec<u8>>) -> Result<f64> {
    check_dims(a, b)?;
    let (ra, rb) = (a.as_raw(), b.as_raw());
    let sum: f64 = ra
        .iter()
        .zip(rb)
        .map(|(&x, &y)| {
            let d = (f64::from(x) - f64::from(y)) / 255.0;
            d * d
        })
        .sum();
    Ok(sum / ra.len() as f64)
}

/// `10·log10(1/MSE)`; `+∞` for identical images.
pub fn psnr<P: Pixel<Subpixel = u8>>(a: &ImageBuffer<P, Vec<u8>>, b: &ImageBuffer<P, Vec<u8>>) -> Result<f64> {
    let e = mse(a, b)?;
    Ok(if e == 0.0 { f64::INFINITY } else { -10.0 * e.log10() })
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Mean SSIM over the valid window positions, averaged across channels.
/// Images smaller than the 11×11 window use a window as large as fits.
pub fn ssim<P: Pixel<Subpixel = u8>>(a: &ImageBuffer<P, Vec<u8>>, b: &ImageBuffer<P, Vec<u8>>) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    let nc = usize::from(P::CHANNEL_COUNT);
    let size = SSIM_WINDOW.min(w).min(h);
    let kernel = gaussian(size);
    let total: f64 = (0..nc)
        .map(|c| {
            let pa: Vec<f64> = a.as_raw().iter().skip(c).step_by(nc).map(|&v| f64::from(v) / 255.0).collect();
            let pb: Vec<f64> = b.as_raw().iter().skip(c).step_by(nc).map(|&v| f64::from(v) / 255.0).collect();
            ssim_plane(&pa, &pb, w, h, &kernel)
        })
        .sum();
    Ok(total / nc as f64)
}

fn gaussian(size: usize) -> Vec<f64> {
    let mid = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - mid;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable valid-region filter of a `w × h` plane.
fn filter_valid(p: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &p[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize, k: &[f64]) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let prod = |f: fn(f64, f64) -> f64| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
    let mu_a = filter_valid(a, w, h, k);
    let mu_b = filter_valid(b, w, h, k);
    let aa = filter_valid(&prod(|x, _| x * x), w, h, k);
    let bb = filter_valid(&prod(|_, y| y * y), w, h, k);
    let ab = filter_valid(&prod(|x, y| x * y), w, h, k);
    let n = mu_a.len();
    let sum: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    sum / n as f64
}
