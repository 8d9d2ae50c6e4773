use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{render_mixture, Gaussian2D, GaussianMixtureSpec, Sym2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuppressionMode {
    /// Remove attention from the region entirely.
    Absolute,
    /// Scale down components inside the region.
    Relative,
}

impl std::str::FromStr for SuppressionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(Self::Absolute),
            "relative" => Ok(Self::Relative),
            other => Err(Error::InvalidArguments(format!("unknown suppression mode {other:?}"))),
        }
    }
}

/// Ellipse overlap that marks a component for shrinking.
const OVERLAP_TRIGGER: f64 = 0.10;
/// Allowed share of rendered mass left inside an absolutely suppressed region.
const MAX_LEAK: f64 = 0.01;
const SHRINK: f64 = 0.8;
const MAX_SHRINK_STEPS: usize = 80;

/// Even-odd point-in-polygon test.
pub fn contains(polygon: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    let mut j = polygon.len() - 1;
    for i in 0..polygon.len() {
        let (a, b) = (polygon[i], polygon[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn area(polygon: &[[f64; 2]]) -> f64 {
    let n = polygon.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
}

/// Fraction of the component's 2σ ellipse that falls inside `polygon`.
fn ellipse_overlap(mean: [f64; 2], cov: &Sym2, polygon: &[[f64; 2]]) -> f64 {
    // Cholesky factor of Σ maps the unit disk onto the 1σ ellipse.
    let l11 = cov.xx.sqrt();
    let l21 = cov.xy / l11;
    let l22 = (cov.yy - l21 * l21).max(0.0).sqrt();
    const N: i32 = 24;
    let (mut hits, mut total) = (0usize, 0usize);
    for a in -N..=N {
        for b in -N..=N {
            let (u, v) = (a as f64 / N as f64, b as f64 / N as f64);
            if u * u + v * v > 1.0 {
                continue;
            }
            let (u, v) = (2.0 * u, 2.0 * v);
            let p = [mean[0] + l11 * u, mean[1] + l21 * u + l22 * v];
            total += 1;
            hits += contains(polygon, p) as usize;
        }
    }
    hits as f64 / total as f64
}

/// Rendered-mass share inside `polygon`, over the canvas raster.
pub fn mass_fraction_inside(spec: &GaussianMixtureSpec, polygon: &[[f64; 2]]) -> Result<f64> {
    let map = render_mixture(spec, spec.width(), spec.height())?;
    let total = map.sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let mut inside = 0.0;
    for y in 0..map.height() {
        for x in 0..map.width() {
            if contains(polygon, [x as f64, y as f64]) {
                inside += map.get(x, y);
            }
        }
    }
    Ok(inside / total)
}

/// Suppresses attention inside `region`.
///
/// Absolute mode drops components centred in the region and shrinks the
/// covariance of neighbours that spill into it until less than 1% of the
/// rendered mass remains inside. Relative mode multiplies the weights of
/// components centred in the region by `attenuation`.
pub fn author_suppression(
    base: &GaussianMixtureSpec,
    region: &[[f64; 2]],
    mode: SuppressionMode,
    attenuation: f64,
) -> Result<GaussianMixtureSpec> {
    base.validate()?;
    if region.len() < 3 || region.iter().flatten().any(|v| !v.is_finite()) || area(region) <= 0.0 {
        return Err(Error::InvalidArguments("region must be a polygon with non-zero area".into()));
    }
    if !(0.0..=1.0).contains(&attenuation) {
        return Err(Error::InvalidArguments(format!("attenuation must lie in [0, 1], got {attenuation}")));
    }
    let mut out = base.clone();
    match mode {
        SuppressionMode::Relative => {
            for g in &mut out.gaussians {
                if contains(region, g.mean) {
                    g.weight *= attenuation;
                }
            }
        }
        SuppressionMode::Absolute => {
            if attenuation > 0.0 {
                return Err(Error::InvalidArguments("absolute suppression requires attenuation 0".into()));
            }
            out.gaussians.retain(|g| !contains(region, g.mean));
            let overlaps: Vec<f64> = out.gaussians.iter().map(|g| ellipse_overlap(g.mean, &g.cov(), region)).collect();
            let mut shrink: Vec<bool> = overlaps.iter().map(|o| *o >= OVERLAP_TRIGGER).collect();
            for step in 0..MAX_SHRINK_STEPS {
                if mass_fraction_inside(&out, region)? < MAX_LEAK {
                    break;
                }
                if step == MAX_SHRINK_STEPS / 4 || !shrink.iter().any(|s| *s) {
                    // Triggered components alone are not enough; tails of
                    // the others are leaking in too.
                    shrink = vec![true; out.gaussians.len()];
                }
                for (g, s) in out.gaussians.iter_mut().zip(&shrink) {
                    if *s {
                        *g = Gaussian2D::new(g.weight, g.mean, g.cov().scaled(SHRINK));
                    }
                }
            }
        }
    }
    Ok(out)
}
