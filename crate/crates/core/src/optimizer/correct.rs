//! Reference retrieval and design correction.
//!
//! Correction fits the authored mixture to the retrieved reference by
//! minimizing the pixel-sum L2 objective over a similarity transform,
//! per-component weight multipliers and per-component covariance scales.
//!
//! The solve is multi-start and coarse-to-fine. Every start first runs
//! against a heavily blurred pair (model blurred analytically, reference by
//! convolution) on a small grid, the best two continue through a lighter blur
//! and then the exact objective at full optimization resolution. The
//! unmodified spec is always a candidate, so the result can never be worse
//! than the input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bfgs::{minimize, BfgsOptions, BfgsOutcome};
use super::embed::TextEmbedder;
use super::objective::{raster_moments, Problem, SampleGrid};
use super::transform::Transform2D;
use crate::error::{Error, Result};
use crate::index::GuidanceIndex;
use crate::map::{Boundary, SaliencyMap};
use crate::mixture::{GaussianMixtureSpec, Sym2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct CorrectionOptions {
    pub max_iterations: usize,
    pub tol: f64,
    /// Release component means from the rigid layout (penalized by `lambda`).
    pub free_means: bool,
    /// Layout penalty weight; `None` means `0.1 · mean(reference)²`.
    pub lambda: Option<f64>,
    /// Seeds the optional random starts.
    pub seed: u64,
    pub random_starts: usize,
    /// Longest side of the optimization raster.
    pub max_resolution: usize,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tol: 1e-8,
            free_means: false,
            lambda: None,
            seed: 0,
            random_starts: 0,
            max_resolution: 128,
        }
    }
}

/// Where the correction objective was evaluated, recorded with every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectiveMetadata {
    pub resolution: [usize; 2],
    pub discretization: String,
    pub reference_normalization: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Alignment {
    pub transform: Transform2D,
    pub corrected_spec: GaussianMixtureSpec,
    pub weight_scales: Vec<f64>,
    pub covariance_scales: Vec<f64>,
    /// Final L2 data term (layout penalty excluded).
    pub residual: f64,
    /// Objective at the identity transform with the unmodified spec.
    pub initial_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: ObjectiveMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CorrectionResult {
    #[serde(flatten)]
    pub alignment: Alignment,
    pub reference_id: u64,
    pub reference_prompt: String,
    pub reference_distance: f64,
    pub reference_map: SaliencyMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub id: u64,
    pub prompt: String,
    pub distance: f64,
    pub map: SaliencyMap,
}

/// The record whose prompt embedding is nearest to `prompt`'s.
pub fn retrieve_reference(prompt: &str, index: &GuidanceIndex, embedder: &dyn TextEmbedder) -> Result<Retrieval> {
    let ranked = index.scan_prompt(prompt, embedder)?;
    let (id, distance) = ranked[0];
    let record = index.record(id).expect("ranked id exists");
    Ok(Retrieval {
        id,
        prompt: record.prompt.clone(),
        distance,
        map: index.map(id)?,
    })
}

pub fn correct(
    spec: &GaussianMixtureSpec,
    prompt: &str,
    index: &GuidanceIndex,
    embedder: &dyn TextEmbedder,
    opts: &CorrectionOptions,
) -> Result<CorrectionResult> {
    spec.validate()?;
    if spec.gaussians.is_empty() {
        return Err(Error::InvalidSpec {
            path: "gaussians".into(),
            reason: "correction needs at least one component".into(),
        });
    }
    let reference = retrieve_reference(prompt, index, embedder)?;
    let alignment = align(spec, &reference.map, opts)?;
    Ok(CorrectionResult {
        alignment,
        reference_id: reference.id,
        reference_prompt: reference.prompt,
        reference_distance: reference.distance,
        reference_map: reference.map,
    })
}

/// Blur as a fraction of the longer canvas side, and the grid cap, per level.
const LEVELS: [(f64, usize); 2] = [(0.08, 32), (0.04, 64)];
const SURVIVORS: usize = 2;

struct Level {
    problem: Problem,
}

/// Fits `spec` to `reference` (stretched over the spec's canvas).
pub fn align(spec: &GaussianMixtureSpec, reference: &SaliencyMap, opts: &CorrectionOptions) -> Result<Alignment> {
    spec.validate()?;
    if opts.max_resolution == 0 || !(opts.tol >= 0.0) {
        return Err(Error::InvalidArguments("maxResolution must be > 0 and tol >= 0".into()));
    }
    let (cw, ch) = (spec.width(), spec.height());
    let pivot = spec.center();
    let (gw, gh) = capped(reference.width(), reference.height(), opts.max_resolution);
    let base = reference.resample(gw, gh)?;
    let fine_grid = SampleGrid::spanning(cw, ch, gw, gh);
    let lambda = match opts.lambda {
        Some(l) if l.is_finite() && l >= 0.0 => l,
        Some(l) => return Err(Error::InvalidArguments(format!("lambda must be >= 0, got {l}"))),
        None => 0.1 * base.mean().powi(2),
    };
    let diag = cw.max(ch) as f64;

    let mut levels = Vec::new();
    for (frac, cap) in LEVELS {
        let variance = (frac * diag).powi(2);
        let sd = variance.sqrt();
        let blurred = base.blur_xy(sd / fine_grid.dx, sd / fine_grid.dy, Boundary::Zero);
        let (lw, lh) = capped(gw, gh, cap.min(opts.max_resolution));
        let level_ref = blurred.resample(lw, lh)?;
        let grid = SampleGrid::spanning(cw, ch, lw, lh);
        levels.push(Level {
            problem: Problem::new(spec, pivot, grid, level_ref.into_values(), variance, opts.free_means, lambda)?,
        });
    }
    let fine = Problem::new(spec, pivot, fine_grid, base.values().to_vec(), 0.0, opts.free_means, lambda)?;

    let identity = fine.params_for(&Transform2D::identity(pivot));
    let initial = fine.value(&identity);
    let bopts = BfgsOptions {
        max_iterations: opts.max_iterations,
        tol: opts.tol,
        value_floor: 0.0,
    };
    let run = |problem: &Problem, x0: &[f64]| minimize(|x, g| problem.value_and_gradient(x, g), x0, &bopts);

    let starts = initial_points(spec, &base, &fine_grid, &fine, opts);

    let mut coarse: Vec<(usize, BfgsOutcome)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| (i, run(&levels[0].problem, x0)))
        .collect();
    coarse.sort_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)));
    coarse.truncate(SURVIVORS);

    let mut candidates: Vec<(usize, BfgsOutcome, usize)> = coarse
        .into_par_iter()
        .map(|(i, first)| {
            let mut iterations = first.iterations;
            let mut x = first.x;
            for level in &levels[1..] {
                let out = run(&level.problem, &x);
                iterations += out.iterations;
                x = out.x;
            }
            let out = run(&fine, &x);
            iterations += out.iterations;
            (i + 1, out, iterations)
        })
        .collect();
    let id_out = run(&fine, &identity);
    let id_iters = id_out.iterations;
    candidates.push((0, id_out, id_iters));

    let best_value = candidates.iter().map(|c| c.1.value).fold(f64::INFINITY, f64::min);
    let slack = 1e-9 * initial.abs() + 1e-12;
    let (_, chosen, iterations) = candidates
        .into_iter()
        .filter(|c| c.1.value <= best_value + slack)
        .min_by_key(|c| c.0)
        .expect("at least the identity candidate");

    let x = chosen.x;
    let state = fine.decode(&x);
    let t = state.transform;
    Ok(Alignment {
        transform: Transform2D::new(t.translation, t.rotation, t.scale, t.pivot)?,
        corrected_spec: fine.spec_for(&x, spec.canvas),
        weight_scales: state.weight_scales,
        covariance_scales: state.covariance_scales,
        residual: fine.data_term(&x).max(0.0),
        initial_residual: initial,
        iterations,
        converged: chosen.converged,
        objective: ObjectiveMetadata {
            resolution: [gw, gh],
            discretization: "pixel-sum".into(),
            reference_normalization: "none".into(),
        },
    })
}

fn capped(w: usize, h: usize, cap: usize) -> (usize, usize) {
    let longest = w.max(h);
    if longest <= cap {
        return (w, h);
    }
    let f = cap as f64 / longest as f64;
    (((w as f64 * f).round() as usize).max(1), ((h as f64 * f).round() as usize).max(1))
}

/// Mass, centroid and second moment of the mixture itself (not its raster).
fn mixture_moments(spec: &GaussianMixtureSpec) -> Option<(f64, [f64; 2], Sym2)> {
    let mass: f64 = spec.gaussians.iter().map(|g| g.mass()).sum();
    if !(mass > 0.0) {
        return None;
    }
    let mut c = [0.0, 0.0];
    for g in &spec.gaussians {
        c[0] += g.mass() * g.mean[0] / mass;
        c[1] += g.mass() * g.mean[1] / mass;
    }
    let mut m = Sym2 { xx: 0.0, xy: 0.0, yy: 0.0 };
    for g in &spec.gaussians {
        let k = g.mass() / mass;
        let cov = g.cov();
        let d = [g.mean[0] - c[0], g.mean[1] - c[1]];
        m.xx += k * (cov.xx + d[0] * d[0]);
        m.xy += k * (cov.xy + d[0] * d[1]);
        m.yy += k * (cov.yy + d[1] * d[1]);
    }
    Some((mass, c, m))
}

fn anisotropic(m: &Sym2) -> bool {
    let [a, b] = m.eigenvalues();
    a.max(b) > 1.2 * a.min(b)
}

/// Moment-matched starts at the cardinal rotations (plus the principal-axis
/// alignment when both shapes are elongated), then seeded random rotations.
fn initial_points(
    spec: &GaussianMixtureSpec,
    reference: &SaliencyMap,
    grid: &SampleGrid,
    problem: &Problem,
    opts: &CorrectionOptions,
) -> Vec<Vec<f64>> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let pivot = spec.center();
    let moments = mixture_moments(spec).zip(raster_moments(reference.values(), grid));
    let Some(((m_spec, c_spec, s_spec), (m_ref, c_ref, s_ref))) = moments else {
        return vec![problem.params_for(&Transform2D::identity(pivot))];
    };
    let scale = (s_ref.trace() / s_spec.trace()).sqrt().clamp(0.25, 4.0);
    let weight = (m_ref / (m_spec * scale * scale)).clamp(1e-3, 1e3);

    let mut thetas = vec![0.0, FRAC_PI_2, -FRAC_PI_2, PI];
    if anisotropic(&s_spec) && anisotropic(&s_ref) {
        let aligned = s_ref.orientation() - s_spec.orientation();
        thetas.push(aligned);
        thetas.push(aligned + PI);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_starts {
        thetas.push(rng.gen_range(-PI..PI));
    }

    thetas
        .into_iter()
        .map(|theta| {
            let (sn, cs) = f64::sin_cos(theta);
            let d = [c_spec[0] - pivot[0], c_spec[1] - pivot[1]];
            let moved = [scale * (cs * d[0] - sn * d[1]), scale * (sn * d[0] + cs * d[1])];
            let t = [c_ref[0] - pivot[0] - moved[0], c_ref[1] - pivot[1] - moved[1]];
            let transform = Transform2D {
                translation: t,
                rotation: theta,
                scale,
                pivot,
            };
            problem.params_with_weight(&transform, weight)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{render_mixture, Gaussian2D};
    use crate::optimizer::embed::HashedEmbedder;

    fn two_blob() -> GaussianMixtureSpec {
        GaussianMixtureSpec::new(
            96,
            96,
            vec![
                Gaussian2D::new(1.0, [36.0, 44.0], Sym2 { xx: 40.0, xy: 10.0, yy: 25.0 }),
                Gaussian2D::isotropic(0.6, [60.0, 52.0], 30.0),
            ],
        )
    }

    #[test]
    fn identity_when_spec_matches_reference() {
        let spec = two_blob();
        let reference = render_mixture(&spec, 96, 96).unwrap();
        let a = align(&spec, &reference, &CorrectionOptions::default()).unwrap();
        let t = a.transform;
        assert!(t.translation[0].hypot(t.translation[1]) < 0.5);
        assert!(t.rotation.abs() < 0.01 && (t.scale - 1.0).abs() < 0.01);
        assert!(a.residual < 1e-6 * 96.0 * 96.0);
    }

    #[test]
    fn recovers_known_transform() {
        let spec = two_blob();
        let truth = Transform2D::new([8.0, -4.0], 0.3, 1.25, spec.center()).unwrap();
        let reference = render_mixture(&truth.apply_to_spec(&spec), 96, 96).unwrap();
        let a = align(&spec, &reference, &CorrectionOptions::default()).unwrap();
        let t = a.transform;
        assert!((t.translation[0] - 8.0).abs() < 1.0 && (t.translation[1] + 4.0).abs() < 1.0, "{t:?}");
        assert!((t.rotation - 0.3).abs() < 0.02 && (t.scale / 1.25 - 1.0).abs() < 0.02, "{t:?}");
        assert!(a.residual <= a.initial_residual);
    }

    #[test]
    fn doubled_mass_doubles_weights() {
        let spec = two_blob();
        let reference = render_mixture(&spec.with_weights_scaled(2.0), 96, 96).unwrap();
        let a = align(&spec, &reference, &CorrectionOptions::default()).unwrap();
        for k in &a.weight_scales {
            assert!((k - 2.0).abs() < 0.1, "{:?}", a.weight_scales);
        }
    }

    #[test]
    fn never_worse_than_input() {
        let spec = two_blob();
        let reference = SaliencyMap::from_fn(40, 30, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
        let opts = CorrectionOptions {
            max_iterations: 5,
            free_means: true,
            ..Default::default()
        };
        let a = align(&spec, &reference, &opts).unwrap();
        assert!(a.residual <= a.initial_residual);
        assert_eq!(a.objective.resolution, [40, 30]);
    }

    #[test]
    fn retrieval_and_correct() {
        let e = HashedEmbedder::default();
        let spec = two_blob();
        let m = render_mixture(&spec, 96, 96).unwrap();
        let idx = GuidanceIndex::from_pairs(
            &e,
            vec![
                ("a red fox in tall grass".into(), SaliencyMap::filled(8, 8, 1.0).unwrap()),
                ("two people talking at a table".into(), m),
            ],
        )
        .unwrap();
        let r = retrieve_reference("two people talking at a table", &idx, &e).unwrap();
        assert_eq!(r.id, 1);
        assert!(r.distance < 1e-9);
        let c = correct(&spec, "two people talking at a table", &idx, &e, &CorrectionOptions::default()).unwrap();
        assert_eq!(c.reference_prompt, "two people talking at a table");
        assert!(c.alignment.residual < 1e-6 * 96.0 * 96.0);

        assert!(correct(&GaussianMixtureSpec::empty(8, 8), "x", &idx, &e, &CorrectionOptions::default()).is_err());
    }

    #[test]
    fn options_json_shape() {
        let o: CorrectionOptions = serde_json::from_str(r#"{"maxIterations":50,"tol":1e-6,"freeMeans":true,"lambda":0.5,"seed":7}"#).unwrap();
        assert_eq!(o.max_iterations, 50);
        assert!(o.free_means);
        assert_eq!(o.lambda, Some(0.5));
        assert_eq!(o.max_resolution, 128);
    }
}
