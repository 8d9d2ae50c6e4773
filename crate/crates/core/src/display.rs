//! Display-adaptive retargeting: move salient content into a preferred band
//! of retinal eccentricity for a given eye/display geometry.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::SaliencyMap;
use crate::mixture::{Gaussian2D, GaussianMixtureSpec, Sym2};
use crate::optimizer::bfgs::{minimize, with_finite_differences, BfgsOptions};
use crate::optimizer::objective::{raster_moments, render_on_grid, SampleGrid};
use crate::optimizer::transform::Transform2D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DisplayConfig {
    pub width_px: u32,
    pub height_px: u32,
    pub physical_width_m: f64,
    pub physical_height_m: f64,
    pub view_distance_m: f64,
    /// Display pixel the eye looks at; the screen center when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze_origin: Option<[f64; 2]>,
}

pub const PRESET_NAMES: &[&str] = &["study-24in"];

impl DisplayConfig {
    /// 24-inch 16:9 panel at 0.6 m: 40 px/deg at the center, about 45.5° x 26.5°.
    pub fn study_24in() -> Self {
        Self {
            width_px: 1920,
            height_px: 1080,
            physical_width_m: 0.5027,
            physical_height_m: 0.2828,
            view_distance_m: 0.6,
            gaze_origin: None,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "study-24in" => Some(Self::study_24in()),
            _ => None,
        }
    }

    /// A preset name or a path to a JSON display description.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some(d) = Self::preset(name_or_path) {
            return Ok(d);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(Error::InvalidArguments(format!(
                "unknown display {name_or_path:?} (presets: {})",
                PRESET_NAMES.join(", ")
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d: Self = serde_json::from_str(&text)?;
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.physical_width_m, self.physical_height_m, self.view_distance_m]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.width_px == 0 || self.height_px == 0 {
            return Err(Error::InvalidArguments("display dimensions and distance must be > 0".into()));
        }
        if let Some(g) = self.gaze_origin {
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArguments("gaze origin must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn gaze(&self) -> [f64; 2] {
        self.gaze_origin
            .unwrap_or([(self.width_px as f64 - 1.0) / 2.0, (self.height_px as f64 - 1.0) / 2.0])
    }

    /// Meters per pixel along x and y.
    pub fn pixel_pitch(&self) -> [f64; 2] {
        [
            self.physical_width_m / self.width_px as f64,
            self.physical_height_m / self.height_px as f64,
        ]
    }

    /// Horizontal and vertical field of view in degrees.
    pub fn fov_deg(&self) -> [f64; 2] {
        [
            2.0 * (self.physical_width_m / 2.0 / self.view_distance_m).atan().to_degrees(),
            2.0 * (self.physical_height_m / 2.0 / self.view_distance_m).atan().to_degrees(),
        ]
    }

    /// Horizontal pixels per degree at the screen center.
    pub fn ppd(&self) -> f64 {
        1.0 / (self.pixel_pitch()[0] / self.view_distance_m).atan().to_degrees()
    }

    /// Eccentricity in degrees of display pixel `(x, y)`: `atan(r / d)`.
    pub fn eccentricity_at(&self, x: f64, y: f64) -> f64 {
        let g = self.gaze();
        let p = self.pixel_pitch();
        let r = ((x - g[0]) * p[0]).hypot((y - g[1]) * p[1]);
        (r / self.view_distance_m).atan().to_degrees()
    }

    /// Display pixel under raster coordinate `(x, y)` of a `width × height`
    /// map stretched over the screen.
    fn to_display(&self, width: usize, height: usize, x: f64, y: f64) -> [f64; 2] {
        let sx = self.width_px as f64 / width as f64;
        let sy = self.height_px as f64 / height as f64;
        [(x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5]
    }

    fn display_to_raster(&self, width: usize, height: usize, p: [f64; 2]) -> [f64; 2] {
        let sx = self.width_px as f64 / width as f64;
        let sy = self.height_px as f64 / height as f64;
        [(p[0] + 0.5) / sx - 0.5, (p[1] + 0.5) / sy - 0.5]
    }
}

/// Per-pixel eccentricity (degrees) of a `width × height` raster shown full-screen.
pub fn eccentricity_map(display: &DisplayConfig, width: usize, height: usize) -> Result<SaliencyMap> {
    display.validate()?;
    SaliencyMap::from_fn(width, height, |x, y| {
        let p = display.to_display(width, height, x as f64, y as f64);
        display.eccentricity_at(p[0], p[1])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EccentricityProfile {
    pub preferred_band_deg: [f64; 2],
    pub falloff_deg: f64,
}

pub const WEIGHT_FLOOR: f64 = 0.05;

impl Default for EccentricityProfile {
    fn default() -> Self {
        Self {
            preferred_band_deg: [7.0, 10.0],
            falloff_deg: 15.0,
        }
    }
}

impl EccentricityProfile {
    pub fn new(inner: f64, outer: f64, falloff: f64) -> Result<Self> {
        let p = Self {
            preferred_band_deg: [inner, outer],
            falloff_deg: falloff,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.preferred_band_deg;
        if !(a >= 0.0 && a < b && b.is_finite() && self.falloff_deg > 0.0 && self.falloff_deg.is_finite()) {
            return Err(Error::InvalidArguments(
                "eccentricity band needs 0 <= inner < outer and falloff > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn in_band(&self, e: f64) -> bool {
        e >= self.preferred_band_deg[0] && e <= self.preferred_band_deg[1]
    }

    /// 1 inside the band, raised-cosine falloff to the floor outside it.
    pub fn weight(&self, e: f64) -> f64 {
        let [a, b] = self.preferred_band_deg;
        let d = if e < a {
            a - e
        } else if e > b {
            e - b
        } else {
            0.0
        };
        if d >= self.falloff_deg {
            return WEIGHT_FLOOR;
        }
        WEIGHT_FLOOR + (1.0 - WEIGHT_FLOOR) * 0.5 * (1.0 + (PI * d / self.falloff_deg).cos())
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.preferred_band_deg[0] + self.preferred_band_deg[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetargetMode {
    Weight,
    Transform,
}

impl std::str::FromStr for RetargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weight" => Ok(Self::Weight),
            "transform" => Ok(Self::Transform),
            other => Err(Error::InvalidArguments(format!("unknown retarget mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct RetargetOptions {
    /// Weight of the layout-change penalty in transform mode.
    pub lambda: f64,
    pub max_components: usize,
    pub max_iterations: usize,
}

impl Default for RetargetOptions {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            max_components: 8,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Retargeted {
    pub map: SaliencyMap,
    pub mode: RetargetMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform2D>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted: Option<GaussianMixtureSpec>,
    pub in_band_before: f64,
    pub in_band_after: f64,
    /// Transform mode fell back to the input because it lost in-band mass.
    pub reverted: bool,
}

/// Share of the map's mass at eccentricities inside the band.
pub fn in_band_fraction(map: &SaliencyMap, display: &DisplayConfig, profile: &EccentricityProfile) -> Result<f64> {
    let ecc = eccentricity_map(display, map.width(), map.height())?;
    let total = map.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMap("map has no mass"));
    }
    let inside: f64 = map
        .values()
        .iter()
        .zip(ecc.values())
        .filter(|(_, e)| profile.in_band(**e))
        .map(|(v, _)| v)
        .sum();
    Ok(inside / total)
}

pub fn retarget(
    target: &SaliencyMap,
    display: &DisplayConfig,
    profile: &EccentricityProfile,
    mode: RetargetMode,
) -> Result<SaliencyMap> {
    Ok(retarget_with(target, display, profile, mode, &RetargetOptions::default())?.map)
}

pub fn retarget_with(
    target: &SaliencyMap,
    display: &DisplayConfig,
    profile: &EccentricityProfile,
    mode: RetargetMode,
    opts: &RetargetOptions,
) -> Result<Retargeted> {
    display.validate()?;
    profile.validate()?;
    if !(target.sum() > 0.0) {
        return Err(Error::DegenerateMap("retarget target has no mass"));
    }
    let before = in_band_fraction(target, display, profile)?;
    match mode {
        RetargetMode::Weight => {
            let ecc = eccentricity_map(display, target.width(), target.height())?;
            let values: Vec<f64> = target
                .values()
                .iter()
                .zip(ecc.values())
                .map(|(v, e)| v * profile.weight(*e))
                .collect();
            let map = SaliencyMap::new(target.width(), target.height(), values)?.normalize_to_max()?;
            let after = in_band_fraction(&map, display, profile)?;
            Ok(Retargeted {
                map,
                mode,
                transform: None,
                fitted: None,
                in_band_before: before,
                in_band_after: after,
                reverted: false,
            })
        }
        RetargetMode::Transform => transform_mode(target, display, profile, opts, before),
    }
}

fn transform_mode(
    target: &SaliencyMap,
    display: &DisplayConfig,
    profile: &EccentricityProfile,
    opts: &RetargetOptions,
    before: f64,
) -> Result<Retargeted> {
    let (w, h) = target.dims();
    let fitted = fit_peaks(target, opts.max_components)?;
    let g = display.gaze();
    let pivot = display.display_to_raster(w, h, g);
    let diag = (w as f64).hypot(h as f64);
    let radius = 0.25 * diag;

    let longest = w.max(h);
    let (gw, gh) = if longest <= 128 {
        (w, h)
    } else {
        let f = 128.0 / longest as f64;
        (((w as f64 * f).round() as usize).max(1), ((h as f64 * f).round() as usize).max(1))
    };
    let grid = SampleGrid::spanning(w, h, gw, gh);
    let weights: Vec<f64> = (0..gh)
        .flat_map(|j| (0..gw).map(move |i| (i, j)))
        .map(|(i, j)| {
            let p = display.to_display(w, h, grid.x(i), grid.y(j));
            profile.weight(display.eccentricity_at(p[0], p[1]))
        })
        .collect();

    let decode = |p: &[f64]| Transform2D {
        translation: [p[0], p[1]],
        rotation: p[2] / radius,
        scale: (p[3] / radius).exp(),
        pivot,
    };
    let objective = |p: &[f64]| {
        let t = decode(p);
        let rendered = render_on_grid(&t.apply_to_spec(&fitted), &grid);
        let total: f64 = rendered.iter().sum();
        let frac = if total > 0.0 {
            rendered.iter().zip(&weights).map(|(r, w)| r * w).sum::<f64>() / total
        } else {
            0.0
        };
        let layout = (t.translation[0].hypot(t.translation[1]) / diag).powi(2) + t.rotation.powi(2) + t.scale.ln().powi(2);
        -frac + opts.lambda * layout
    };

    let mut starts = vec![vec![0.0; 4]];
    if let Some(t) = radial_start(target, display, profile, pivot) {
        starts.push(vec![t[0], t[1], 0.0, 0.0]);
    }
    let bopts = BfgsOptions {
        max_iterations: opts.max_iterations,
        tol: 1e-10,
        value_floor: f64::NEG_INFINITY,
    };
    let best = starts
        .iter()
        .map(|x0| minimize(with_finite_differences(objective, 1e-5), x0, &bopts))
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(_, out)| out)
        .expect("identity start");
    let t = decode(&best.x);
    let transform = Transform2D::new(t.translation, t.rotation, t.scale, t.pivot)?;

    let warped = SaliencyMap::from_fn(w, h, |x, y| {
        let src = transform.apply_inverse([x as f64, y as f64]);
        target.sample_bilinear(src[0], src[1])
    })?;
    let candidate = if warped.sum() > 0.0 { Some(warped.normalize_to_max()?) } else { None };
    let after = match &candidate {
        Some(m) => in_band_fraction(m, display, profile)?,
        None => f64::NEG_INFINITY,
    };
    let (map, after, reverted) = match candidate {
        Some(m) if after >= before => (m, after, false),
        _ => (target.normalize_to_max()?, before, true),
    };
    Ok(Retargeted {
        map,
        mode: RetargetMode::Transform,
        transform: Some(if reverted { Transform2D::identity(pivot) } else { transform }),
        fitted: Some(fitted),
        in_band_before: before,
        in_band_after: after,
        reverted,
    })
}

/// Translation that moves the target's centroid radially to mid-band.
fn radial_start(target: &SaliencyMap, display: &DisplayConfig, profile: &EccentricityProfile, pivot: [f64; 2]) -> Option<[f64; 2]> {
    let (w, h) = target.dims();
    let (_, c, _) = raster_moments(target.values(), &SampleGrid::canvas(w, h))?;
    let d = [c[0] - pivot[0], c[1] - pivot[1]];
    let len = d[0].hypot(d[1]);
    let u = if len > 1e-9 { [d[0] / len, d[1] / len] } else { [1.0, 0.0] };
    let ecc = |r: f64| {
        let p = display.to_display(w, h, pivot[0] + u[0] * r, pivot[1] + u[1] * r);
        display.eccentricity_at(p[0], p[1])
    };
    let goal = profile.mid();
    let (mut lo, mut hi) = (0.0, (w as f64).hypot(h as f64));
    if ecc(hi) < goal {
        return None;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ecc(mid) < goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    Some([pivot[0] + u[0] * r - c[0], pivot[1] + u[1] * r - c[1]])
}

/// Inside its half-max ellipse a Gaussian's second moment is `(1 − ln 2)·Σ`.
const HALF_MAX_MOMENT_SCALE: f64 = 1.0 / (1.0 - std::f64::consts::LN_2);
const MIN_PEAK_FRACTION: f64 = 0.05;

/// Greedy peak extraction: take the global max, fit a Gaussian from the
/// second moments of its connected half-max region, subtract, repeat.
pub fn fit_peaks(target: &SaliencyMap, max_components: usize) -> Result<GaussianMixtureSpec> {
    let (w, h) = target.dims();
    let mut residual = target.values().to_vec();
    let first_peak = target.max();
    if !(first_peak > 0.0) {
        return Err(Error::DegenerateMap("cannot fit peaks to a map without mass"));
    }
    let mut spec = GaussianMixtureSpec::empty(w as u32, h as u32);
    let mut region = vec![false; w * h];
    let mut stack = Vec::new();
    for _ in 0..max_components {
        let (peak_at, &peak) = residual
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty map");
        if peak <= MIN_PEAK_FRACTION * first_peak {
            break;
        }
        region.iter_mut().for_each(|r| *r = false);
        stack.clear();
        stack.push(peak_at);
        region[peak_at] = true;
        let half = 0.5 * peak;
        let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let (x, y) = (i % w, i / w);
            let v = residual[i];
            m += v;
            sx += v * x as f64;
            sy += v * y as f64;
            let mut visit = |n: usize| {
                if !region[n] && residual[n] >= half {
                    region[n] = true;
                    stack.push(n);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        let c = [sx / m, sy / m];
        let mut cov = Sym2 { xx: 0.0, xy: 0.0, yy: 0.0 };
        for &i in &members {
            let v = residual[i] / m;
            let d = [(i % w) as f64 - c[0], (i / w) as f64 - c[1]];
            cov.xx += v * d[0] * d[0];
            cov.xy += v * d[0] * d[1];
            cov.yy += v * d[1] * d[1];
        }
        let mut cov = cov.scaled(HALF_MAX_MOMENT_SCALE);
        // A region of one or two pixels has (near) zero spread; give it a pixel's worth.
        if cov.eigenvalues()[0].min(cov.eigenvalues()[1]) < 0.25 {
            cov = cov.add_isotropic(0.25);
        }
        let g = Gaussian2D::new(peak, c, cov);
        let inv = cov.inverse().expect("positive definite");
        for (i, r) in residual.iter_mut().enumerate() {
            let d = [(i % w) as f64 - c[0], (i / w) as f64 - c[1]];
            *r = (*r - peak * (-0.5 * inv.quad(d)).exp()).max(0.0);
        }
        spec.gaussians.push(g);
    }
    Ok(spec)
}
