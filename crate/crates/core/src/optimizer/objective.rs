//! Pixel-sum L2 objective between a transformed Gaussian mixture and a
//! reference raster, with analytic gradients.
//!
//! The optimizer sees a flat parameter vector:
//!
//! ```text
//! [tx, ty, θ·R, ln(s)·R, ln(ω_1..ω_N), u_1..u_N, (δ_1x, δ_1y, ..)]
//! ```
//!
//! where `R` is the mixture's radius about the pivot (so every entry moves
//! content by roughly one pixel per unit), `ω_i` multiplies weight `i`, and
//! `c_i = exp(u_i − mean(u))` scales covariance `i`. The per-component scales
//! are gauge-fixed to geometric mean one so they never trade off against the
//! global scale `s`. `δ_i` are free mean offsets, present only when means are
//! released from the rigid layout, and cost `λ·Σ‖δ_i‖²`.
//!
//! For coarse-to-fine solves every component can be convolved with an
//! isotropic Gaussian of variance `v`, which keeps the closed form:
//! `w·sqrt(|Σ| / |Σ + vI|)·exp(−½ dᵀ(Σ + vI)⁻¹d)`.

use crate::error::{Error, Result};
use crate::map::SaliencyMap;
use crate::mixture::{Gaussian2D, GaussianMixtureSpec, Sym2};
use crate::optimizer::transform::Transform2D;

/// Components contribute nothing beyond this squared Mahalanobis distance
/// (relative value below 5e-18).
const CUTOFF_Q: f64 = 80.0;

/// Canvas coordinates of a sampling raster: cell `(i, j)` is evaluated at
/// `(x0 + i·dx, y0 + j·dy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub width: usize,
    pub height: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
}

impl SampleGrid {
    /// One cell per canvas pixel.
    pub fn canvas(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            x0: 0.0,
            y0: 0.0,
            dx: 1.0,
            dy: 1.0,
        }
    }

    /// A `width × height` raster stretched over a `canvas_w × canvas_h` canvas.
    pub fn spanning(canvas_w: usize, canvas_h: usize, width: usize, height: usize) -> Self {
        let dx = canvas_w as f64 / width as f64;
        let dy = canvas_h as f64 / height as f64;
        Self {
            width,
            height,
            x0: 0.5 * dx - 0.5,
            y0: 0.5 * dy - 0.5,
            dx,
            dy,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.dy
    }

    fn cols(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        index_range(lo, hi, self.x0, self.dx, self.width)
    }

    fn rows(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        index_range(lo, hi, self.y0, self.dy, self.height)
    }
}

fn index_range(lo: f64, hi: f64, origin: f64, step: f64, len: usize) -> std::ops::Range<usize> {
    let a = ((lo - origin) / step).ceil().max(0.0);
    let b = ((hi - origin) / step).floor() + 1.0;
    let b = b.min(len as f64);
    if !(a < b) {
        return 0..0;
    }
    a as usize..b as usize
}

/// Renders a validated mixture at the grid's sample points.
pub fn render_on_grid(spec: &GaussianMixtureSpec, grid: &SampleGrid) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for g in &spec.gaussians {
        let inv = g.cov().inverse().expect("validated covariance");
        for j in 0..grid.height {
            let dy = grid.y(j) - g.mean[1];
            for i in 0..grid.width {
                let dx = grid.x(i) - g.mean[0];
                out[j * grid.width + i] += g.weight * (-0.5 * inv.quad([dx, dy])).exp();
            }
        }
    }
    out
}

/// `‖render(T∘spec) − reference‖²` summed over the reference's pixels, with
/// the spec's canvas stretched over the reference raster.
pub fn objective(spec: &GaussianMixtureSpec, transform: &Transform2D, reference: &SaliencyMap) -> Result<f64> {
    spec.validate()?;
    let grid = SampleGrid::spanning(spec.width(), spec.height(), reference.width(), reference.height());
    let problem = Problem::new(
        spec,
        transform.pivot,
        grid,
        reference.values().to_vec(),
        0.0,
        false,
        0.0,
    )?;
    let params = problem.params_for(transform);
    Ok(problem.value(&params))
}

/// Decoded optimizer state.
#[derive(Debug, Clone)]
pub(crate) struct State {
    pub transform: Transform2D,
    pub weight_scales: Vec<f64>,
    pub covariance_scales: Vec<f64>,
    pub offsets: Vec<[f64; 2]>,
}

struct Component {
    weight: f64,
    mean: [f64; 2],
    cov: Sym2,
}

pub(crate) struct Problem {
    base: Vec<Component>,
    pivot: [f64; 2],
    grid: SampleGrid,
    reference: Vec<f64>,
    blur: f64,
    free_means: bool,
    lambda: f64,
    radius: f64,
}

struct Evaluated {
    weight: f64,
    mean: [f64; 2],
    /// Unblurred transformed covariance.
    cov: Sym2,
    /// Inverse of the blurred covariance.
    precision: Sym2,
    trace_ps: f64,
    rho: [f64; 2],
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    values: Vec<f64>,
}

impl Problem {
    pub fn new(
        spec: &GaussianMixtureSpec,
        pivot: [f64; 2],
        grid: SampleGrid,
        reference: Vec<f64>,
        blur: f64,
        free_means: bool,
        lambda: f64,
    ) -> Result<Self> {
        if reference.len() != grid.len() {
            return Err(Error::InvalidArguments("reference does not match sample grid".into()));
        }
        let base: Vec<Component> = spec
            .gaussians
            .iter()
            .map(|g| Component {
                weight: g.weight,
                mean: g.mean,
                cov: g.cov(),
            })
            .collect();
        let rms = if base.is_empty() {
            0.0
        } else {
            (base
                .iter()
                .map(|c| (c.mean[0] - pivot[0]).powi(2) + (c.mean[1] - pivot[1]).powi(2))
                .sum::<f64>()
                / base.len() as f64)
                .sqrt()
        };
        Ok(Self {
            base,
            pivot,
            grid,
            reference,
            blur,
            free_means,
            lambda,
            radius: rms.max(4.0),
        })
    }

    pub fn dim(&self) -> usize {
        let n = self.base.len();
        4 + 2 * n + if self.free_means { 2 * n } else { 0 }
    }

    pub fn params_for(&self, t: &Transform2D) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        p[0] = t.translation[0];
        p[1] = t.translation[1];
        p[2] = t.rotation * self.radius;
        p[3] = t.scale.ln() * self.radius;
        p
    }

    /// Initial vector with a uniform weight multiplier.
    pub fn params_with_weight(&self, t: &Transform2D, weight_scale: f64) -> Vec<f64> {
        let mut p = self.params_for(t);
        let n = self.base.len();
        p[4..4 + n].iter_mut().for_each(|v| *v = weight_scale.ln());
        p
    }

    pub fn decode(&self, p: &[f64]) -> State {
        let n = self.base.len();
        let theta = p[2] / self.radius;
        let scale = (p[3] / self.radius).exp();
        let u = &p[4 + n..4 + 2 * n];
        let u_mean = if n > 0 { u.iter().sum::<f64>() / n as f64 } else { 0.0 };
        State {
            transform: Transform2D {
                translation: [p[0], p[1]],
                rotation: theta,
                scale,
                pivot: self.pivot,
            },
            weight_scales: p[4..4 + n].iter().map(|a| a.exp()).collect(),
            covariance_scales: u.iter().map(|v| (v - u_mean).exp()).collect(),
            offsets: if self.free_means {
                p[4 + 2 * n..].chunks(2).map(|c| [c[0], c[1]]).collect()
            } else {
                vec![[0.0, 0.0]; n]
            },
        }
    }

    /// The mixture described by a parameter vector, on the original canvas.
    pub fn spec_for(&self, p: &[f64], canvas: crate::mixture::Canvas) -> GaussianMixtureSpec {
        let state = self.decode(p);
        let gaussians = self
            .components(&state)
            .into_iter()
            .map(|(w, m, c, _)| Gaussian2D::new(w, m, c))
            .collect();
        GaussianMixtureSpec { canvas, gaussians }
    }

    fn components(&self, state: &State) -> Vec<(f64, [f64; 2], Sym2, [f64; 2])> {
        let t = &state.transform;
        let (sn, cs) = t.rotation.sin_cos();
        let s2 = t.scale * t.scale;
        self.base
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let d = [c.mean[0] - self.pivot[0], c.mean[1] - self.pivot[1]];
                let rho = [t.scale * (cs * d[0] - sn * d[1]), t.scale * (sn * d[0] + cs * d[1])];
                let off = state.offsets[i];
                let mean = [
                    self.pivot[0] + rho[0] + t.translation[0] + off[0],
                    self.pivot[1] + rho[1] + t.translation[1] + off[1],
                ];
                let cov = c.cov.rotated(t.rotation).scaled(s2 * state.covariance_scales[i]);
                (c.weight * state.weight_scales[i], mean, cov, rho)
            })
            .collect()
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        self.evaluate(p, None)
    }

    pub fn value_and_gradient(&self, p: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(p, Some(grad))
    }

    /// Data term only (no layout penalty) at `p`.
    pub fn data_term(&self, p: &[f64]) -> f64 {
        let state = self.decode(p);
        let penalty: f64 = state.offsets.iter().map(|o| o[0] * o[0] + o[1] * o[1]).sum::<f64>() * self.lambda;
        self.value(p) - penalty
    }

    fn evaluate(&self, p: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let state = self.decode(p);
        let grid = &self.grid;
        let mut model = vec![0.0; grid.len()];
        let mut evaluated = Vec::with_capacity(self.base.len());

        for (weight, mean, cov, rho) in self.components(&state) {
            let blurred = cov.add_isotropic(self.blur);
            let precision = blurred.inverse().unwrap_or(Sym2 { xx: 0.0, xy: 0.0, yy: 0.0 });
            let amp = weight * (cov.det() / blurred.det()).sqrt();
            let (hx, hy) = ((CUTOFF_Q * blurred.xx).sqrt(), (CUTOFF_Q * blurred.yy).sqrt());
            let usable = amp > 0.0 && amp.is_finite() && hx.is_finite() && hy.is_finite();
            let (rows, cols) = if usable {
                (grid.rows(mean[1] - hy, mean[1] + hy), grid.cols(mean[0] - hx, mean[0] + hx))
            } else {
                (0..0, 0..0)
            };
            let mut values = Vec::with_capacity(rows.len() * cols.len());
            for j in rows.clone() {
                let dy = grid.y(j) - mean[1];
                let row = &mut model[j * grid.width..(j + 1) * grid.width];
                for i in cols.clone() {
                    let dx = grid.x(i) - mean[0];
                    let q = precision.xx * dx * dx + 2.0 * precision.xy * dx * dy + precision.yy * dy * dy;
                    let g = if q > CUTOFF_Q { 0.0 } else { amp * (-0.5 * q).exp() };
                    row[i] += g;
                    values.push(g);
                }
            }
            evaluated.push(Evaluated {
                weight,
                mean,
                cov,
                precision,
                trace_ps: trace_product(&precision, &cov),
                rho,
                rows,
                cols,
                values,
            });
        }

        let mut value = 0.0;
        for (m, r) in model.iter_mut().zip(&self.reference) {
            *m -= r;
            value += *m * *m;
        }
        let residual = model;
        let penalty: f64 = state.offsets.iter().map(|o| o[0] * o[0] + o[1] * o[1]).sum::<f64>();
        value += self.lambda * penalty;

        let Some(grad) = grad else { return value };
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = self.base.len();
        let (mut g_theta, mut g_lns) = (0.0, 0.0);
        let mut g_logc = vec![0.0; n];

        for (k, ev) in evaluated.iter().enumerate() {
            let (mut s_e, mut s_cross, mut s_q) = (0.0, 0.0, 0.0);
            let mut s_v = [0.0, 0.0];
            let mut idx = 0;
            for j in ev.rows.clone() {
                let dy = grid.y(j) - ev.mean[1];
                for i in ev.cols.clone() {
                    let g = ev.values[idx];
                    idx += 1;
                    if g == 0.0 {
                        continue;
                    }
                    let e = 2.0 * residual[j * grid.width + i] * g;
                    let dx = grid.x(i) - ev.mean[0];
                    let v = ev.precision.apply([dx, dy]);
                    let w = ev.cov.apply(v);
                    s_e += e;
                    s_v[0] += e * v[0];
                    s_v[1] += e * v[1];
                    s_q += e * (v[0] * w[0] + v[1] * w[1]);
                    s_cross += e * (v[1] * w[0] - v[0] * w[1]);
                }
            }
            if ev.weight == 0.0 {
                continue;
            }
            grad[0] += s_v[0];
            grad[1] += s_v[1];
            let j_rho = [-ev.rho[1], ev.rho[0]];
            g_theta += s_v[0] * j_rho[0] + s_v[1] * j_rho[1] + s_cross;
            g_lns += s_v[0] * ev.rho[0] + s_v[1] * ev.rho[1] + (2.0 - ev.trace_ps) * s_e + s_q;
            grad[4 + k] = s_e;
            g_logc[k] = (1.0 - 0.5 * ev.trace_ps) * s_e + 0.5 * s_q;
            if self.free_means {
                let off = state.offsets[k];
                grad[4 + 2 * n + 2 * k] = s_v[0] + 2.0 * self.lambda * off[0];
                grad[4 + 2 * n + 2 * k + 1] = s_v[1] + 2.0 * self.lambda * off[1];
            }
        }
        if self.free_means {
            // Components without weight still feel the penalty.
            for (k, ev) in evaluated.iter().enumerate() {
                if ev.weight == 0.0 {
                    let off = state.offsets[k];
                    grad[4 + 2 * n + 2 * k] = 2.0 * self.lambda * off[0];
                    grad[4 + 2 * n + 2 * k + 1] = 2.0 * self.lambda * off[1];
                }
            }
        }
        grad[2] = g_theta / self.radius;
        grad[3] = g_lns / self.radius;
        let mean_logc = if n > 0 { g_logc.iter().sum::<f64>() / n as f64 } else { 0.0 };
        for k in 0..n {
            grad[4 + n + k] = g_logc[k] - mean_logc;
        }
        value
    }
}

fn trace_product(a: &Sym2, b: &Sym2) -> f64 {
    a.xx * b.xx + 2.0 * a.xy * b.xy + a.yy * b.yy
}

/// Mass, centroid and central second moment of a non-negative raster in
/// canvas coordinates.
pub(crate) fn raster_moments(values: &[f64], grid: &SampleGrid) -> Option<(f64, [f64; 2], Sym2)> {
    let mut mass = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for j in 0..grid.height {
        for i in 0..grid.width {
            let v = values[j * grid.width + i];
            mass += v;
            sx += v * grid.x(i);
            sy += v * grid.y(j);
        }
    }
    if !(mass > 0.0) {
        return None;
    }
    let c = [sx / mass, sy / mass];
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for j in 0..grid.height {
        let dy = grid.y(j) - c[1];
        for i in 0..grid.width {
            let v = values[j * grid.width + i];
            let dx = grid.x(i) - c[0];
            xx += v * dx * dx;
            xy += v * dx * dy;
            yy += v * dy * dy;
        }
    }
    Some((mass, c, Sym2 { xx: xx / mass, xy: xy / mass, yy: yy / mass }))
}
