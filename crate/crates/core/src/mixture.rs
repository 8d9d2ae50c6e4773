//! User-authored saliency as a weighted sum of bivariate Gaussians.
//!
//! JSON form:
//! `{"canvas":{"w":int,"h":int},"gaussians":[{"w":float,"mu":[x,y],"sigma":[[a,b],[b,c]]}]}`

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::SaliencyMap;

/// Symmetric 2×2 matrix stored as `(xx, xy, yy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub fn isotropic(variance: f64) -> Self {
        Self {
            xx: variance,
            xy: 0.0,
            yy: variance,
        }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn is_positive_definite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite() && self.xx > 0.0 && self.det() > 0.0
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let det = self.det();
        if !(det > 0.0 && det.is_finite()) {
            return None;
        }
        Some(Sym2 {
            xx: self.yy / det,
            xy: -self.xy / det,
            yy: self.xx / det,
        })
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            xx: self.xx * k,
            xy: self.xy * k,
            yy: self.yy * k,
        }
    }

    pub fn add_isotropic(&self, v: f64) -> Self {
        Self {
            xx: self.xx + v,
            xy: self.xy,
            yy: self.yy + v,
        }
    }

    /// `R(θ) · self · R(θ)ᵀ`.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let xx = c * c * self.xx - 2.0 * c * s * self.xy + s * s * self.yy;
        let yy = s * s * self.xx + 2.0 * c * s * self.xy + c * c * self.yy;
        let xy = c * s * (self.xx - self.yy) + (c * c - s * s) * self.xy;
        Self { xx, xy, yy }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    pub fn quad(&self, v: [f64; 2]) -> f64 {
        self.xx * v[0] * v[0] + 2.0 * self.xy * v[0] * v[1] + self.yy * v[1] * v[1]
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = (half_diff * half_diff + self.xy * self.xy).sqrt();
        [mean + r, mean - r]
    }

    /// Angle of the major axis in `(-π/2, π/2]`.
    pub fn orientation(&self) -> f64 {
        0.5 * (2.0 * self.xy).atan2(self.xx - self.yy)
    }

    pub fn to_matrix(&self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2D {
    #[serde(rename = "w")]
    pub weight: f64,
    #[serde(rename = "mu")]
    pub mean: [f64; 2],
    #[serde(rename = "sigma")]
    pub covariance: [[f64; 2]; 2],
}

impl Gaussian2D {
    pub fn new(weight: f64, mean: [f64; 2], covariance: Sym2) -> Self {
        Self {
            weight,
            mean,
            covariance: covariance.to_matrix(),
        }
    }

    pub fn isotropic(weight: f64, mean: [f64; 2], variance: f64) -> Self {
        Self::new(weight, mean, Sym2::isotropic(variance))
    }

    /// The covariance as a symmetric matrix. Only meaningful after [`validate`](Self::validate).
    pub fn cov(&self) -> Sym2 {
        Sym2 {
            xx: self.covariance[0][0],
            xy: self.covariance[0][1],
            yy: self.covariance[1][1],
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(Error::InvalidSpec {
                path: format!("{path}.w"),
                reason: format!("weight must be finite and >= 0, got {}", self.weight),
            });
        }
        if !self.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidSpec {
                path: format!("{path}.mu"),
                reason: "mean must be finite".into(),
            });
        }
        let [[a, b], [b2, c]] = self.covariance;
        if b != b2 {
            return Err(Error::InvalidCovariance {
                path: format!("{path}.sigma"),
                reason: format!("not symmetric ({b} vs {b2})"),
            });
        }
        let cov = Sym2 { xx: a, xy: b, yy: c };
        if !cov.is_positive_definite() {
            return Err(Error::InvalidCovariance {
                path: format!("{path}.sigma"),
                reason: format!("not positive definite (eigenvalues {:?})", cov.eigenvalues()),
            });
        }
        Ok(())
    }

    /// Unnormalized value `w · exp(-½ dᵀ Σ⁻¹ d)` at a point.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let inv = self.cov().inverse().expect("validated covariance");
        let d = [x - self.mean[0], y - self.mean[1]];
        self.weight * (-0.5 * inv.quad(d)).exp()
    }

    /// Integral over the plane, `w · 2π · sqrt(det Σ)`.
    pub fn mass(&self) -> f64 {
        self.weight * std::f64::consts::TAU * self.cov().det().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub canvas: Canvas,
    #[serde(default)]
    pub gaussians: Vec<Gaussian2D>,
}

impl GaussianMixtureSpec {
    pub fn new(width: u32, height: u32, gaussians: Vec<Gaussian2D>) -> Self {
        Self {
            canvas: Canvas { w: width, h: height },
            gaussians,
        }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::new(width, height, Vec::new())
    }

    pub fn width(&self) -> usize {
        self.canvas.w as usize
    }

    pub fn height(&self) -> usize {
        self.canvas.h as usize
    }

    /// Canvas center under the pixel-center convention.
    pub fn center(&self) -> [f64; 2] {
        [
            (self.canvas.w as f64 - 1.0) / 2.0,
            (self.canvas.h as f64 - 1.0) / 2.0,
        ]
    }

    /// Checks every invariant; error paths look like `gaussians[2].sigma`.
    pub fn validate(&self) -> Result<()> {
        if self.canvas.w == 0 || self.canvas.h == 0 {
            return Err(Error::InvalidSpec {
                path: "canvas".into(),
                reason: format!("dimensions must be >= 1, got {}x{}", self.canvas.w, self.canvas.h),
            });
        }
        let (w, h) = (self.canvas.w as f64, self.canvas.h as f64);
        for (i, g) in self.gaussians.iter().enumerate() {
            let path = format!("gaussians[{i}]");
            g.validate(&path)?;
            let [x, y] = g.mean;
            if !(-w..=2.0 * w).contains(&x) || !(-h..=2.0 * h).contains(&y) {
                return Err(Error::InvalidSpec {
                    path: format!("{path}.mu"),
                    reason: format!("mean ({x}, {y}) outside [-w, 2w] x [-h, 2h]"),
                });
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Same components with every weight multiplied by `k`.
    pub fn with_weights_scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.gaussians.iter_mut().for_each(|g| g.weight *= k);
        out
    }
}

/// Renders `Σ_i w_i exp(-½ (p-μ_i)ᵀ Σ_i⁻¹ (p-μ_i))` at every pixel center of a
/// `width × height` raster. Canvas units are pixels of that raster.
pub fn render_mixture(spec: &GaussianMixtureSpec, width: usize, height: usize) -> Result<SaliencyMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArguments(format!(
            "render dimensions must be >= 1, got {width}x{height}"
        )));
    }
    for (i, g) in spec.gaussians.iter().enumerate() {
        g.validate(&format!("gaussians[{i}]"))?;
    }
    let mut values = vec![0.0; width * height];
    for g in &spec.gaussians {
        accumulate(&mut values, width, height, g);
    }
    SaliencyMap::new(width, height, values)
}

fn accumulate(values: &mut [f64], width: usize, height: usize, g: &Gaussian2D) {
    let inv = g.cov().inverse().expect("validated covariance");
    for y in 0..height {
        let dy = y as f64 - g.mean[1];
        let row = &mut values[y * width..(y + 1) * width];
        for (x, v) in row.iter_mut().enumerate() {
            let dx = x as f64 - g.mean[0];
            *v += g.weight * (-0.5 * (inv.xx * dx * dx + 2.0 * inv.xy * dx * dy + inv.yy * dy * dy)).exp();
        }
    }
}
