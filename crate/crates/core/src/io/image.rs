//! 8-bit grayscale PNG export for visual inspection.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fourier::RealImage;

/// Min-max scale to 0..=255; a constant image maps to all zeros.
pub fn to_gray8(img: &RealImage) -> Vec<u8> {
    let lo = img.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    img.data
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect()
}

/// Signed difference `recon - truth` around mid-gray 128, scaled
/// symmetrically so the largest magnitude reaches 1 or 255.
pub fn diff_to_gray8(recon: &RealImage, truth: &RealImage) -> Result<Vec<u8>> {
    if !recon.same_shape(truth) {
        return Err(Error::shape("difference needs images of equal shape"));
    }
    let diff: Vec<f64> = recon.data.iter().zip(&truth.data).map(|(a, b)| a - b).collect();
    let peak = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(diff
        .iter()
        .map(|&d| if peak > 0.0 { (128.0 + 127.0 * d / peak).round() as u8 } else { 128 })
        .collect())
}

pub fn encode_png(width: usize, height: usize, gray: &[u8]) -> Result<Vec<u8>> {
    if gray.len() != width * height {
        return Err(Error::shape(format!("{} pixels for a {width}x{height} image", gray.len())));
    }
    let (w, h) = (u32::try_from(width), u32::try_from(height));
    let (Ok(w), Ok(h)) = (w, h) else {
        return Err(Error::shape("image too large for PNG"));
    };
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, w, h);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let fail = |e: png::EncodingError| Error::format(format!("PNG encoding failed: {e}"));
    let mut writer = enc.write_header().map_err(fail)?;
    writer.write_image_data(gray).map_err(fail)?;
    writer.finish().map_err(fail)?;
    Ok(out)
}

pub fn write_png(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    let bytes = encode_png(width, height, gray)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
