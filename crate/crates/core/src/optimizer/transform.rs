use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Gaussian2D, GaussianMixtureSpec};

/// Similarity transform about a pivot: `p ↦ pivot + s·R(θ)·(p − pivot) + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform2D {
    pub translation: [f64; 2],
    pub rotation: f64,
    pub scale: f64,
    pub pivot: [f64; 2],
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta - TAU * ((theta + PI) / TAU).floor();
    // floor maps exactly -π to -π; the interval is open on that side.
    if wrapped <= -PI {
        wrapped + TAU
    } else {
        wrapped
    }
}

impl Transform2D {
    pub fn identity(pivot: [f64; 2]) -> Self {
        Self {
            translation: [0.0, 0.0],
            rotation: 0.0,
            scale: 1.0,
            pivot,
        }
    }

    pub fn new(translation: [f64; 2], rotation: f64, scale: f64, pivot: [f64; 2]) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArguments(format!("scale must be > 0, got {scale}")));
        }
        if !(rotation.is_finite() && translation.iter().chain(&pivot).all(|v| v.is_finite())) {
            return Err(Error::InvalidArguments("transform parameters must be finite".into()));
        }
        Ok(Self {
            translation,
            rotation: wrap_angle(rotation),
            scale,
            pivot,
        })
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let d = [p[0] - self.pivot[0], p[1] - self.pivot[1]];
        [
            self.pivot[0] + self.scale * (c * d[0] - s * d[1]) + self.translation[0],
            self.pivot[1] + self.scale * (s * d[0] + c * d[1]) + self.translation[1],
        ]
    }

    pub fn apply_inverse(&self, q: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let d = [
            (q[0] - self.pivot[0] - self.translation[0]) / self.scale,
            (q[1] - self.pivot[1] - self.translation[1]) / self.scale,
        ];
        [self.pivot[0] + c * d[0] + s * d[1], self.pivot[1] - s * d[0] + c * d[1]]
    }

    /// `μ' = T(μ)`, `Σ' = s²·R Σ Rᵀ`, weight unchanged.
    pub fn apply_to_gaussian(&self, g: &Gaussian2D) -> Gaussian2D {
        let cov = g.cov().rotated(self.rotation).scaled(self.scale * self.scale);
        Gaussian2D::new(g.weight, self.apply(g.mean), cov)
    }

    pub fn apply_to_spec(&self, spec: &GaussianMixtureSpec) -> GaussianMixtureSpec {
        GaussianMixtureSpec {
            canvas: spec.canvas,
            gaussians: spec.gaussians.iter().map(|g| self.apply_to_gaussian(g)).collect(),
        }
    }
}
