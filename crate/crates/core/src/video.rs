use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::SaliencyMap;
use crate::metrics::{aggregate, evaluate_pair, AggregateReport, MetricReport};

/// Per-frame saliency at a fixed frame rate. All frames share dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencySequence {
    frames: Vec<SaliencyMap>,
    fps: f64,
}

impl SaliencySequence {
    pub fn new(frames: Vec<SaliencyMap>, fps: f64) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::EmptySequence);
        };
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidArguments(format!("fps must be finite and > 0, got {fps}")));
        }
        let dims = first.dims();
        if let Some(bad) = frames.iter().find(|f| f.dims() != dims) {
            return Err(Error::ShapeMismatch {
                left: dims,
                right: bad.dims(),
            });
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[SaliencyMap] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<SaliencyMap> {
        self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

/// Exponential moving average over frames: `F'_t = α F_t + (1 − α) F'_{t−1}`.
pub fn smooth_temporal(seq: &SaliencySequence, alpha: f64) -> Result<SaliencySequence> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArguments(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if alpha == 1.0 {
        return Ok(seq.clone());
    }
    let (w, h) = seq.dims();
    let mut out: Vec<SaliencyMap> = Vec::with_capacity(seq.len());
    for frame in seq.frames() {
        let next = match out.last() {
            None => frame.clone(),
            Some(prev) => {
                let values = frame
                    .values()
                    .iter()
                    .zip(prev.values())
                    .map(|(f, p)| alpha * f + (1.0 - alpha) * p)
                    .collect();
                SaliencyMap::new(w, h, values)?
            }
        };
        out.push(next);
    }
    SaliencySequence::new(out, seq.fps())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SequenceReport {
    pub frames: Vec<MetricReport>,
    pub aggregate: AggregateReport,
    pub evaluated_frames: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Frames are compared as distributions (each normalized to sum 1).
    pub normalization: String,
}

/// Frame-wise cc/kl/sim. Sequences of different lengths are trimmed to the
/// shorter one, never interpolated.
pub fn evaluate_sequence(target: &SaliencySequence, achieved: &SaliencySequence) -> Result<SequenceReport> {
    let n = target.len().min(achieved.len());
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let mut warnings = Vec::new();
    if target.len() != achieved.len() {
        let msg = format!(
            "length mismatch: target has {} frames, achieved {}; evaluating the first {n}",
            target.len(),
            achieved.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let frames: Vec<MetricReport> = (0..n)
        .into_par_iter()
        .map(|t| evaluate_pair(&target.frames()[t], &achieved.frames()[t], None))
        .collect();
    Ok(SequenceReport {
        aggregate: aggregate(&frames),
        frames,
        evaluated_frames: n,
        warnings,
        normalization: "distribution".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(vals: &[[f64; 2]]) -> SaliencySequence {
        SaliencySequence::new(vals.iter().map(|v| SaliencyMap::new(2, 1, v.to_vec()).unwrap()).collect(), 24.0).unwrap()
    }

    #[test]
    fn invariants() {
        assert!(matches!(SaliencySequence::new(vec![], 24.0), Err(Error::EmptySequence)));
        let a = SaliencyMap::zeros(2, 2).unwrap();
        let b = SaliencyMap::zeros(3, 2).unwrap();
        assert!(SaliencySequence::new(vec![a.clone(), b], 24.0).is_err());
        assert!(SaliencySequence::new(vec![a.clone()], 0.0).is_err());
        assert!(SaliencySequence::new(vec![a], f64::NAN).is_err());
    }

    #[test]
    fn ema_matches_unrolled_recurrence() {
        let s = seq(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let out = smooth_temporal(&s, 0.5).unwrap();
        let f1 = [1.0, 0.0];
        let f2 = [0.5 * 0.0 + 0.5 * f1[0], 0.5 * 1.0 + 0.5 * f1[1]];
        let f3 = [0.5 * 1.0 + 0.5 * f2[0], 0.5 * 1.0 + 0.5 * f2[1]];
        for (got, want) in out.frames().iter().zip([f1, f2, f3]) {
            assert!((got.values()[0] - want[0]).abs() < 1e-12 && (got.values()[1] - want[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn ema_identity_and_fixed_point() {
        let s = seq(&[[1.0, 2.0], [3.0, 0.5]]);
        assert_eq!(smooth_temporal(&s, 1.0).unwrap(), s);
        let c = seq(&[[0.2, 0.8], [0.2, 0.8], [0.2, 0.8]]);
        let out = smooth_temporal(&c, 0.3).unwrap();
        for f in out.frames() {
            assert!((f.values()[0] - 0.2).abs() < 1e-15 && (f.values()[1] - 0.8).abs() < 1e-15);
        }
        assert!(smooth_temporal(&s, 0.0).is_err());
    }

    #[test]
    fn length_mismatch_trims() {
        let t = seq(&[[1.0, 2.0]; 10]);
        let a = seq(&[[1.0, 2.0]; 8]);
        let r = evaluate_sequence(&t, &a).unwrap();
        assert_eq!(r.evaluated_frames, 8);
        assert_eq!(r.frames.len(), 8);
        assert_eq!(r.warnings.len(), 1);
        let cc = r.aggregate.cc.unwrap();
        assert!((cc.mean - 1.0).abs() < 1e-12 && cc.std.abs() < 1e-12);
    }
}
