//! 8-bit grayscale PNG import/export.
//!
//! Import maps `[0, 255]` onto `[0, 1]`; color images are reduced to Rec. 709
//! luminance first. Export scales linearly so the map's maximum becomes 255,
//! which discards absolute intensity and quantizes to 8 bits.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat};

use crate::error::{Error, Result};
use crate::map::SaliencyMap;

pub const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

/// Rec. 709 luma weights for linear RGB.
pub const REC709: [f64; 3] = [0.2126, 0.7152, 0.0722];

pub fn decode(bytes: &[u8]) -> Result<SaliencyMap> {
    let image = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    Ok(luminance(&image))
}

/// Per-pixel luminance in `[0, 1]`.
pub fn luminance(image: &DynamicImage) -> SaliencyMap {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let values = match image {
        DynamicImage::ImageLuma8(gray) => gray.as_raw().iter().map(|v| *v as f64 / 255.0).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (REC709[0] * r as f64 + REC709[1] * g as f64 + REC709[2] * b as f64) / 255.0
            })
            .collect(),
    };
    SaliencyMap::from_raw(w, h, values)
}

/// Quantizes `map / max(map)` to 8-bit gray; an all-zero map exports black.
pub fn to_gray(map: &SaliencyMap) -> GrayImage {
    let peak = map.max();
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let pixels = map
        .values()
        .iter()
        .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::from_raw(map.width() as u32, map.height() as u32, pixels).expect("buffer sized from map dims")
}

pub fn encode(map: &SaliencyMap) -> Result<Vec<u8>> {
    encode_gray(&to_gray(map))
}

pub fn encode_gray(image: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    image.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<SaliencyMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_file(path: impl AsRef<Path>, map: &SaliencyMap) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(map)?).map_err(|e| Error::io(path, e))
}
