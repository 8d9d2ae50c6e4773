//! The saliency raster shared by every other module.
//!
//! Pixel `(x, y)` has its center at continuous coordinate `(x, y)` and covers
//! `[x - 0.5, x + 0.5) × [y - 0.5, y + 0.5)`. Rendering, fixation lookup and
//! resampling all use this convention, so a point at integer coordinates maps
//! exactly onto a pixel center.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMap(format!(
                "dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if width.checked_mul(height) != Some(values.len()) {
            return Err(Error::InvalidMap(format!(
                "{width}x{height} map needs {} values, got {}",
                width.saturating_mul(height),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidMap(format!(
                "value at index {i} is {} (must be finite and >= 0)",
                values[i]
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width.saturating_mul(height)])
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    /// Builds a map from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    /// Internal constructor for values already known to satisfy the invariants.
    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(width * height, values.len());
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    /// First pixel (row-major) holding the maximum value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    pub fn is_constant(&self) -> bool {
        let first = self.values[0];
        self.values.iter().all(|v| *v == first)
    }

    /// Multiplies every value by a non-negative finite factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::InvalidArguments(format!("scale factor {factor}")));
        }
        Ok(Self::from_raw(
            self.width,
            self.height,
            self.values.iter().map(|v| v * factor).collect(),
        ))
    }

    /// Rescales the map so its values sum to one.
    pub fn normalize_to_distribution(&self) -> Result<Self> {
        let total = self.sum();
        if total <= 0.0 {
            return Err(Error::DegenerateMap("map has no positive mass"));
        }
        Ok(Self::from_raw(
            self.width,
            self.height,
            self.values.iter().map(|v| v / total).collect(),
        ))
    }

    /// Rescales the map so its maximum is one.
    pub fn normalize_to_max(&self) -> Result<Self> {
        let peak = self.max();
        if peak <= 0.0 {
            return Err(Error::DegenerateMap("map has no positive mass"));
        }
        Ok(Self::from_raw(
            self.width,
            self.height,
            self.values.iter().map(|v| v / peak).collect(),
        ))
    }

    /// Bilinear resampling with edge clamping.
    ///
    /// Destination pixel `i` samples source coordinate
    /// `(i + 0.5) * src / dst - 0.5`, which keeps image extents aligned.
    pub fn resample(&self, new_width: usize, new_height: usize) -> Result<Self> {
        if new_width == 0 || new_height == 0 {
            return Err(Error::InvalidArguments(format!(
                "target dimensions must be >= 1, got {new_width}x{new_height}"
            )));
        }
        if (new_width, new_height) == self.dims() {
            return Ok(self.clone());
        }
        let xs = axis_taps(self.width, new_width);
        let ys = axis_taps(self.height, new_height);
        let mut out = Vec::with_capacity(new_width * new_height);
        for &(y0, y1, fy) in &ys {
            let row0 = &self.values[y0 * self.width..(y0 + 1) * self.width];
            let row1 = &self.values[y1 * self.width..(y1 + 1) * self.width];
            for &(x0, x1, fx) in &xs {
                let top = row0[x0] * (1.0 - fx) + row0[x1] * fx;
                let bottom = row1[x0] * (1.0 - fx) + row1[x1] * fx;
                out.push((top * (1.0 - fy) + bottom * fy).max(0.0));
            }
        }
        Ok(Self::from_raw(new_width, new_height, out))
    }

    /// Samples the map at a continuous coordinate with bilinear interpolation;
    /// points outside the raster read as zero.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = x.floor();
        let fy = y.floor();
        let (tx, ty) = (x - fx, y - fy);
        let (ix, iy) = (fx as i64, fy as i64);
        let at = |px: i64, py: i64| -> f64 {
            if px < 0 || py < 0 || px >= self.width as i64 || py >= self.height as i64 {
                0.0
            } else {
                self.values[py as usize * self.width + px as usize]
            }
        };
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        (top * (1.0 - ty) + bottom * ty).max(0.0)
    }

    /// Separable Gaussian blur, kernel truncated at `4σ` and renormalized.
    pub fn blur(&self, sigma: f64, boundary: Boundary) -> Self {
        self.blur_xy(sigma, sigma, boundary)
    }

    /// Blur with separate horizontal and vertical σ; a non-positive σ skips that axis.
    pub fn blur_xy(&self, sigma_x: f64, sigma_y: f64, boundary: Boundary) -> Self {
        let mut values = self.values.clone();
        if sigma_x > 0.0 {
            values = convolve_axis(&values, self.width, self.height, &gaussian_kernel(sigma_x), boundary, true);
        }
        if sigma_y > 0.0 {
            values = convolve_axis(&values, self.width, self.height, &gaussian_kernel(sigma_y), boundary, false);
        }
        Self::from_raw(self.width, self.height, values.into_iter().map(|v| v.max(0.0)).collect())
    }
}

/// How blur treats samples that fall outside the raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Outside samples are zero; mass near the border leaks out.
    Zero,
    /// Outside samples repeat the nearest edge pixel; constants stay constant.
    Clamp,
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Normalized 1-D Gaussian taps over `[-r, r]` with `r = ceil(4σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

fn convolve_axis(
    src: &[f64],
    width: usize,
    height: usize,
    kernel: &[f64],
    boundary: Boundary,
    horizontal: bool,
) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let (len, lines) = if horizontal { (width, height) } else { (height, width) };
    let mut out = vec![0.0; src.len()];
    for line in 0..lines {
        let index = |k: usize| {
            if horizontal {
                line * width + k
            } else {
                k * width + line
            }
        };
        for k in 0..len {
            let mut acc = 0.0;
            for (j, w) in kernel.iter().enumerate() {
                let pos = k as i64 + j as i64 - radius;
                let pos = if pos < 0 || pos >= len as i64 {
                    match boundary {
                        Boundary::Zero => continue,
                        Boundary::Clamp => pos.clamp(0, len as i64 - 1),
                    }
                } else {
                    pos
                };
                acc += w * src[index(pos as usize)];
            }
            out[index(k)] = acc;
        }
    }
    out
}

/// JSON form: `{"w": .., "h": .., "data_b64": <base64 SMAP bytes>}`.
impl Serialize for SaliencyMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        crate::formats::smap::EncodedMap::from_map(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SaliencyMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let encoded = crate::formats::smap::EncodedMap::deserialize(deserializer)?;
        encoded.decode().map_err(serde::de::Error::custom)
    }
}
