//! Browser bindings. Buffers are canvas `ImageData` bytes (RGBA); alpha is
//! ignored on input and set opaque on output.

use image::{GrayImage, RgbImage};
use wasm_bindgen::prelude::*;

use qops::workflows::{self, ContrastParams, GrayEncoding};
use qops::{DirectionSpec, Normalize, Sign, SplitSpec};

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_rgb(rgba: &[u8], width: u32, height: u32) -> Result<RgbImage, JsError> {
    if rgba.len() != 4 * width as usize * height as usize {
        return Err(err(format!("expected {} bytes for {width}x{height}", 4 * width * height)));
    }
    let rgb = rgba.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
    RgbImage::from_raw(width, height, rgb).ok_or_else(|| err("bad dimensions"))
}

fn rgb_to_rgba(img: &RgbImage) -> Vec<u8> {
    img.pixels().flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

fn gray_to_rgba(img: &GrayImage) -> Vec<u8> {
    img.pixels().flat_map(|p| [p[0], p[0], p[0], 255]).collect()
}

/// `muN`, `x,y,z`, `#RRGGBB` or `sample:X,Y[:X2,Y2]`.
fn direction(spec: &str, image: &RgbImage) -> Result<qops::Direction, JsError> {
    match spec.trim().parse::<DirectionSpec>().map_err(err)? {
        DirectionSpec::Sample(region) => qops::qimage::sample_direction(image, region, true).map_err(err),
        other => other.resolve(true).map_err(err),
    }
}

/// Re-colorize with one half of the split.
#[wasm_bindgen]
pub fn recolor(rgba: &[u8], width: u32, height: u32, sign: &str, f: &str, g: &str) -> Result<Vec<u8>, JsError> {
    let img = to_rgb(rgba, width, height)?;
    let sign: Sign = sign.parse().map_err(err)?;
    let f = direction(f, &img)?;
    let g = if g.trim().is_empty() { f } else { direction(g, &img)? };
    let spec = SplitSpec::new(sign, f, g).map_err(err)?;
    Ok(rgb_to_rgba(&workflows::recolorize(&img, &spec, &Normalize::PerChannel)))
}

/// Grayscale along `f`. `method` is `p1`, `p2a`, `p2b` or `custom`.
#[wasm_bindgen]
pub fn decolor(rgba: &[u8], width: u32, height: u32, method: &str, f: &str) -> Result<Vec<u8>, JsError> {
    let img = to_rgb(rgba, width, height)?;
    let gray = match method {
        "p1" => workflows::decolorize_p1(&img),
        "p2a" => workflows::decolorize_p2a(&img),
        "p2b" => workflows::decolorize_p2b(&img, &Default::default()),
        "custom" => workflows::decolorize(&img, direction(f, &img)?, GrayEncoding::Anchored),
        other => return Err(err(format!("unknown method {other:?}"))),
    }
    .map_err(err)?;
    Ok(gray_to_rgba(&gray))
}

/// Contrast enhancement. `preset` is `natural`, `ct` or `alpha,beta,gamma,delta`.
#[wasm_bindgen]
pub fn contrast(rgba: &[u8], width: u32, height: u32, preset: &str) -> Result<Vec<u8>, JsError> {
    let img = to_rgb(rgba, width, height)?;
    let params: ContrastParams = preset.parse().map_err(err)?;
    Ok(rgb_to_rgba(&workflows::contrast_enhance(&img, &params).map_err(err)?))
}
