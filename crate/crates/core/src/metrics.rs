//! Saliency similarity metrics: AUC-Judd, NSS, CC, KL and SIM.
//!
//! Fixation-based metrics (AUC, NSS) score a saliency map against gaze
//! samples; distribution-based metrics (CC, KL, SIM) compare two maps.
//! Standard deviations are population (biased) estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixation::FixationSet;
use crate::map::SaliencyMap;

/// Regularizer added to the achieved distribution inside the KL logarithm.
pub const DEFAULT_KL_EPSILON: f64 = 1e-8;

fn check_dims(a: &SaliencyMap, b: &SaliencyMap) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// AUC-Judd: thresholds at every distinct saliency value found under a
/// fixated pixel; true positives are fixated pixels, false positives are all
/// other pixels; the ROC (from (0,0) to (1,1)) is integrated with trapezoids.
pub fn auc_judd(pred: &SaliencyMap, fixations: &FixationSet) -> Result<f64> {
    let mut fixated = vec![false; pred.len()];
    let mut positives = 0usize;
    for (x, y) in fixations.pixels(pred.width(), pred.height()) {
        let i = y * pred.width() + x;
        if !fixated[i] {
            fixated[i] = true;
            positives += 1;
        }
    }
    if positives == 0 {
        return Err(Error::EmptyFixations);
    }
    if pred.is_constant() {
        return Err(Error::UndefinedMetric("AUC (constant map)"));
    }
    let negatives = pred.len() - positives;
    if negatives == 0 {
        return Err(Error::UndefinedMetric("AUC (every pixel fixated)"));
    }

    let mut order: Vec<usize> = (0..pred.len()).collect();
    let values = pred.values();
    order.sort_by(|a, b| values[*b].total_cmp(&values[*a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        // Consume every pixel tied at this value.
        let v = values[order[i]];
        let mut has_fixated = false;
        while i < order.len() && values[order[i]] == v {
            if fixated[order[i]] {
                tp += 1;
                has_fixated = true;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if has_fixated {
            points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
        }
    }
    points.push((1.0, 1.0));
    Ok(trapezoid(&points))
}

pub(crate) fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Normalized Scanpath Saliency: mean of the standardized map over fixated
/// pixels (duplicates counted).
pub fn nss(pred: &SaliencyMap, fixations: &FixationSet) -> Result<f64> {
    let (mean, std) = mean_std(pred.values());
    if pred.is_constant() || std <= 0.0 {
        return Err(Error::UndefinedMetric("NSS (zero-variance map)"));
    }
    let pixels = fixations.pixels(pred.width(), pred.height());
    if pixels.is_empty() {
        return Err(Error::EmptyFixations);
    }
    let total: f64 = pixels.iter().map(|(x, y)| (pred.get(*x, *y) - mean) / std).sum();
    Ok(total / pixels.len() as f64)
}

/// Pearson correlation over all pixels.
pub fn cc(a: &SaliencyMap, b: &SaliencyMap) -> Result<f64> {
    check_dims(a, b)?;
    let (ma, sa) = mean_std(a.values());
    let (mb, sb) = mean_std(b.values());
    if a.is_constant() || b.is_constant() || sa <= 0.0 || sb <= 0.0 {
        return Err(Error::UndefinedMetric("CC (zero-variance map)"));
    }
    let cov = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / a.len() as f64;
    Ok((cov / (sa * sb)).clamp(-1.0, 1.0))
}

/// `KL(target ‖ achieved) = Σ P ln(P / (Q + ε))` over distribution-normalized
/// maps, clamped at zero.
pub fn kl_divergence(target: &SaliencyMap, achieved: &SaliencyMap, epsilon: f64) -> Result<f64> {
    check_dims(target, achieved)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidArguments(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let p = target.normalize_to_distribution()?;
    // An achieved map without mass is a valid (maximally wrong) prediction.
    let q_total = achieved.sum();
    let q_scale = if q_total > 0.0 { 1.0 / q_total } else { 0.0 };
    if epsilon == 0.0 && q_total <= 0.0 {
        return Err(Error::UndefinedMetric("KL (achieved has no mass and epsilon is 0)"));
    }
    let kl: f64 = p
        .values()
        .iter()
        .zip(achieved.values())
        .filter(|(pv, _)| **pv > 0.0)
        .map(|(pv, qv)| pv * (pv / (qv * q_scale + epsilon)).ln())
        .sum();
    if kl.is_infinite() {
        return Err(Error::UndefinedMetric("KL (achieved misses target support and epsilon is 0)"));
    }
    Ok(kl.max(0.0))
}

/// Histogram intersection of the two distribution-normalized maps.
pub fn sim(a: &SaliencyMap, b: &SaliencyMap) -> Result<f64> {
    check_dims(a, b)?;
    let pa = a.normalize_to_distribution()?;
    let pb = b.normalize_to_distribution()?;
    let s: f64 = pa.values().iter().zip(pb.values()).map(|(x, y)| x.min(*y)).sum();
    Ok(s.clamp(0.0, 1.0))
}

/// A metric value, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metric {
    Value(f64),
    Error { error: String },
}

impl Metric {
    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Error { .. } => None,
        }
    }
}

impl From<Result<f64>> for Metric {
    fn from(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Metric::Value(v),
            Err(e) => Metric::Error { error: e.to_string() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<Metric>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nss: Option<Metric>,
    pub cc: Metric,
    pub kl: Metric,
    pub sim: Metric,
    /// Whether `achieved` was resampled to the target's dimensions.
    pub resampled: bool,
}

/// Compares an achieved map with the target; AUC and NSS score the target
/// against fixations (in target pixel coordinates) when those are given.
/// The achieved map is resampled to the target's dimensions first.
pub fn evaluate_pair(target: &SaliencyMap, achieved: &SaliencyMap, fixations: Option<&FixationSet>) -> MetricReport {
    let resampled = target.dims() != achieved.dims();
    let achieved = if resampled {
        achieved
            .resample(target.width(), target.height())
            .expect("target dims are >= 1")
    } else {
        achieved.clone()
    };
    MetricReport {
        auc: fixations.map(|f| auc_judd(target, f).into()),
        nss: fixations.map(|f| nss(target, f).into()),
        cc: cc(target, &achieved).into(),
        kl: kl_divergence(target, &achieved, DEFAULT_KL_EPSILON).into(),
        sim: sim(target, &achieved).into(),
        resampled,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(values);
        Some(Self {
            mean,
            std,
            count: values.len(),
        })
    }
}

/// Per-metric mean ± std over the items where the metric was computed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nss: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cc: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<Summary>,
}

pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a MetricReport>) -> AggregateReport {
    let mut cols: [Vec<f64>; 5] = Default::default();
    for r in reports {
        let fields = [
            r.auc.as_ref().and_then(Metric::value),
            r.nss.as_ref().and_then(Metric::value),
            r.cc.value(),
            r.kl.value(),
            r.sim.value(),
        ];
        for (col, v) in cols.iter_mut().zip(fields) {
            col.extend(v);
        }
    }
    AggregateReport {
        auc: Summary::of(&cols[0]),
        nss: Summary::of(&cols[1]),
        cc: Summary::of(&cols[2]),
        kl: Summary::of(&cols[3]),
        sim: Summary::of(&cols[4]),
    }
}

pub struct BatchItem {
    pub target: SaliencyMap,
    pub achieved: SaliencyMap,
    pub fixations: Option<FixationSet>,
}

/// Fixation-pooled scores: every in-bounds fixation across the batch counts
/// once, so images with more fixations weigh more.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PooledReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nss: Option<f64>,
    pub fixations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub items: Vec<MetricReport>,
    /// Per-image averaging.
    pub mean: AggregateReport,
    pub pooled: PooledReport,
}

/// Evaluates items in parallel; results and aggregation keep input order.
pub fn evaluate_batch(items: &[BatchItem]) -> BatchReport {
    let reports: Vec<MetricReport> = items
        .par_iter()
        .map(|it| evaluate_pair(&it.target, &it.achieved, it.fixations.as_ref()))
        .collect();

    let mut pooled = PooledReport::default();
    let (mut auc_sum, mut nss_sum, mut auc_n, mut nss_n) = (0.0, 0.0, 0usize, 0usize);
    for (it, r) in items.iter().zip(&reports) {
        let Some(f) = &it.fixations else { continue };
        let n = f.pixels(it.target.width(), it.target.height()).len();
        pooled.fixations += n;
        if let Some(v) = r.auc.as_ref().and_then(Metric::value) {
            auc_sum += v * n as f64;
            auc_n += n;
        }
        if let Some(v) = r.nss.as_ref().and_then(Metric::value) {
            nss_sum += v * n as f64;
            nss_n += n;
        }
    }
    pooled.auc = (auc_n > 0).then(|| auc_sum / auc_n as f64);
    pooled.nss = (nss_n > 0).then(|| nss_sum / nss_n as f64);

    BatchReport {
        mean: aggregate(&reports),
        items: reports,
        pooled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> SaliencyMap {
        SaliencyMap::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0)).unwrap()
    }

    #[test]
    fn auc_perfect_on_unique_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = random_map(&mut rng, 10, 10);
        let mut v = m.clone().into_values();
        v[37] = 2.0;
        m = SaliencyMap::new(10, 10, v).unwrap();
        let fx = FixationSet::from_points(&[(7.0, 3.0), (7.2, 2.9)], 40.0).unwrap();
        assert!((auc_judd(&m, &fx).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn auc_hand_enumerated_3x3() {
        // Values 1..9 row-major; fixations on the pixels holding 9 and 5.
        let m = SaliencyMap::new(3, 3, (1..=9).map(|v| v as f64).collect()).unwrap();
        let fx = FixationSet::from_points(&[(2.0, 2.0), (1.0, 1.0)], 40.0).unwrap();
        // thr 9: tp 1/2, fp 0/7. thr 5: pixels >= 5 are {5,6,7,8,9}, the
        // non-fixated ones {6,7,8} give fp 3/7, tp 2/2.
        let pts = [(0.0, 0.0), (0.0, 0.5), (3.0 / 7.0, 1.0), (1.0, 1.0)];
        let want = trapezoid(&pts);
        assert!((want - (3.0 / 7.0 * 0.75 + 4.0 / 7.0)).abs() < 1e-15);
        assert_eq!(auc_judd(&m, &fx).unwrap(), want);
    }

    #[test]
    fn auc_errors() {
        let flat = SaliencyMap::filled(4, 4, 1.0).unwrap();
        let fx = FixationSet::from_points(&[(1.0, 1.0)], 40.0).unwrap();
        assert!(matches!(auc_judd(&flat, &fx), Err(Error::UndefinedMetric(_))));
        let m = SaliencyMap::from_fn(4, 4, |x, _| x as f64).unwrap();
        let none = FixationSet::from_points(&[(9.0, 9.0)], 40.0).unwrap();
        assert!(matches!(auc_judd(&m, &none), Err(Error::EmptyFixations)));
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_map(&mut rng, 12, 12);
        let pts: Vec<_> = (0..15).map(|_| (rng.gen_range(0.0..11.0), rng.gen_range(0.0..11.0))).collect();
        let fx = FixationSet::from_points(&pts, 40.0).unwrap();
        let t = SaliencyMap::new(12, 12, m.values().iter().map(|v| (3.0 * v).exp() + 0.5).collect()).unwrap();
        assert_eq!(auc_judd(&m, &fx).unwrap(), auc_judd(&t, &fx).unwrap());
    }

    #[test]
    fn nss_cases() {
        let m = SaliencyMap::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let m2 = SaliencyMap::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let at_mean = FixationSet::from_points(&[(1.0, 0.0)], 40.0).unwrap();
        assert!(nss(&m2, &at_mean).unwrap().abs() < 1e-9);

        let at_max = FixationSet::from_points(&[(3.0, 0.0), (3.0, 0.0)], 40.0).unwrap();
        let (mean, std) = (1.5, (1.25f64).sqrt());
        assert!((nss(&m, &at_max).unwrap() - (3.0 - mean) / std).abs() < 1e-12);

        let pts = [(0.0, 0.0), (2.0, 0.0), (3.0, 0.0)];
        let once = FixationSet::from_points(&pts, 40.0).unwrap();
        let twice: Vec<_> = pts.iter().chain(pts.iter()).copied().collect();
        let twice = FixationSet::from_points(&twice, 40.0).unwrap();
        assert!((nss(&m, &once).unwrap() - nss(&m, &twice).unwrap()).abs() < 1e-15);

        let flat = SaliencyMap::filled(3, 3, 0.2).unwrap();
        assert!(matches!(nss(&flat, &once), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn cc_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_map(&mut rng, 8, 8);
        assert!((cc(&m, &m).unwrap() - 1.0).abs() < 1e-9);
        let inv = SaliencyMap::new(8, 8, m.values().iter().map(|v| 2.0 - v).collect()).unwrap();
        assert!((cc(&m, &inv).unwrap() + 1.0).abs() < 1e-9);
        let other = SaliencyMap::filled(4, 4, 1.0).unwrap();
        assert!(matches!(cc(&m, &other), Err(Error::ShapeMismatch { .. })));
        let flat = SaliencyMap::filled(8, 8, 1.0).unwrap();
        assert!(matches!(cc(&m, &flat), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn kl_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_map(&mut rng, 8, 8);
        assert!(kl_divergence(&m, &m, 1e-8).unwrap() <= 1e-6);

        let n = 64;
        let mut delta = vec![0.0; n];
        delta[10] = 1.0;
        let p = SaliencyMap::new(8, 8, delta).unwrap();
        let q = SaliencyMap::filled(8, 8, 1.0).unwrap();
        assert!((kl_divergence(&p, &q, 1e-8).unwrap() - (n as f64).ln()).abs() < 1e-3);

        let skew = SaliencyMap::new(2, 1, vec![0.9, 0.1]).unwrap();
        let flat = SaliencyMap::new(2, 1, vec![0.5, 0.5]).unwrap();
        let ab = kl_divergence(&skew, &flat, 1e-8).unwrap();
        let ba = kl_divergence(&flat, &skew, 1e-8).unwrap();
        assert!((ab - ba).abs() > 1e-3);
    }

    #[test]
    fn sim_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = random_map(&mut rng, 8, 8);
        assert!((sim(&m, &m).unwrap() - 1.0).abs() < 1e-9);
        let mut a = vec![0.0; 4];
        let mut b = vec![0.0; 4];
        a[0] = 1.0;
        b[3] = 1.0;
        let a = SaliencyMap::new(2, 2, a).unwrap();
        let b = SaliencyMap::new(2, 2, b).unwrap();
        assert!(sim(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn identical_pair_report() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_map(&mut rng, 16, 16);
        let r = evaluate_pair(&m, &m, None);
        assert!((r.cc.value().unwrap() - 1.0).abs() < 1e-9);
        assert!(r.kl.value().unwrap() < 1e-6);
        assert!((r.sim.value().unwrap() - 1.0).abs() < 1e-9);
        assert!(r.auc.is_none() && r.nss.is_none());
        assert!(!r.resampled);
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("auc"));
    }

    #[test]
    fn report_marks_errors_instead_of_nan() {
        let t = SaliencyMap::from_fn(4, 4, |x, y| (x + y) as f64).unwrap();
        let a = SaliencyMap::zeros(4, 4).unwrap();
        let r = evaluate_pair(&t, &a, None);
        assert!(matches!(r.cc, Metric::Error { .. }));
        assert!(matches!(r.sim, Metric::Error { .. }));
        assert!(r.kl.value().unwrap().is_finite());
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["cc"]["error"].is_string());
    }

    #[test]
    fn mismatched_dims_are_resampled() {
        let t = SaliencyMap::from_fn(8, 8, |x, _| x as f64 + 1.0).unwrap();
        let a = SaliencyMap::from_fn(4, 4, |x, _| x as f64 + 1.0).unwrap();
        let r = evaluate_pair(&t, &a, None);
        assert!(r.resampled);
        assert!(r.cc.value().unwrap() > 0.95);
    }
}
