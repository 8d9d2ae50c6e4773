//! Eye-tracking samples and their conversion to empirical saliency.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{Boundary, SaliencyMap};

/// Default blur for gaze-to-saliency conversion, roughly the foveal extent.
pub const DEFAULT_SIGMA_DEG: f64 = 1.0;

/// One gaze sample. Field names match the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub subject_id: String,
    pub timestamp_ms: f64,
    #[serde(rename = "x_px")]
    pub x: f64,
    #[serde(rename = "y_px")]
    pub y: f64,
}

impl Fixation {
    pub fn new(subject_id: impl Into<String>, timestamp_ms: f64, x: f64, y: f64) -> Self {
        Self {
            subject_id: subject_id.into(),
            timestamp_ms,
            x,
            y,
        }
    }

    /// Nearest pixel, if it lies on a `width × height` raster.
    pub fn pixel(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        let px = (self.x + 0.5).floor();
        let py = (self.y + 0.5).floor();
        if px >= 0.0 && py >= 0.0 && px < width as f64 && py < height as f64 {
            Some((px as usize, py as usize))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationSet {
    records: Vec<Fixation>,
    /// Pixels per degree of visual angle on the display that was tracked.
    display_ppd: f64,
}

impl FixationSet {
    pub fn new(records: Vec<Fixation>, display_ppd: f64) -> Result<Self> {
        if !(display_ppd.is_finite() && display_ppd > 0.0) {
            return Err(Error::InvalidFixations(format!("ppd must be > 0, got {display_ppd}")));
        }
        let mut last: HashMap<&str, f64> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if !(r.x.is_finite() && r.y.is_finite()) {
                return Err(Error::InvalidFixations(format!("record {i}: non-finite position")));
            }
            if !r.timestamp_ms.is_finite() {
                return Err(Error::InvalidFixations(format!("record {i}: non-finite timestamp")));
            }
            if let Some(prev) = last.insert(&r.subject_id, r.timestamp_ms) {
                if r.timestamp_ms < prev {
                    return Err(Error::InvalidFixations(format!(
                        "record {i}: timestamp {} precedes {prev} for subject {:?}",
                        r.timestamp_ms, r.subject_id
                    )));
                }
            }
        }
        Ok(Self { records, display_ppd })
    }

    /// Fixations given directly as pixel positions, one anonymous subject.
    pub fn from_points(points: &[(f64, f64)], display_ppd: f64) -> Result<Self> {
        let records = points
            .iter()
            .enumerate()
            .map(|(i, (x, y))| Fixation::new("0", i as f64, *x, *y))
            .collect();
        Self::new(records, display_ppd)
    }

    pub fn records(&self) -> &[Fixation] {
        &self.records
    }

    pub fn display_ppd(&self) -> f64 {
        self.display_ppd
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// In-bounds nearest pixels, one per record, duplicates kept.
    pub fn pixels(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        self.records.iter().filter_map(|r| r.pixel(width, height)).collect()
    }

    /// Parses CSV with header `subject_id,timestamp_ms,x_px,y_px`.
    pub fn from_csv(reader: impl Read, display_ppd: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::parse(format!("fixation CSV: {e}")))?;
        let expected = ["subject_id", "timestamp_ms", "x_px", "y_px"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::parse(format!(
                "fixation CSV: header must be {}, got {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for (i, row) in rdr.deserialize().enumerate() {
            let rec: Fixation = row.map_err(|e| Error::parse(format!("fixation CSV row {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Self::new(records, display_ppd)
    }

    pub fn read_csv(path: impl AsRef<Path>, display_ppd: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(file, display_ppd)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).expect("in-memory CSV write");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
    }
}

/// Converts gaze samples to a distribution-normalized saliency map.
///
/// Each in-bounds fixation adds a unit impulse at its nearest pixel; the
/// impulse field is blurred by an isotropic Gaussian with
/// `σ = sigma_deg × ppd` pixels (separable, truncated at 4σ, zero outside the
/// raster) and normalized to sum to one.
pub fn empirical_saliency(fixations: &FixationSet, width: usize, height: usize, sigma_deg: f64) -> Result<SaliencyMap> {
    if !(sigma_deg.is_finite() && sigma_deg > 0.0) {
        return Err(Error::InvalidArguments(format!("sigmaDeg must be > 0, got {sigma_deg}")));
    }
    let impulses = impulse_map(fixations, width, height)?;
    let sigma_px = sigma_deg * fixations.display_ppd();
    impulses.blur(sigma_px, Boundary::Zero).normalize_to_distribution()
}

fn impulse_map(fixations: &FixationSet, width: usize, height: usize) -> Result<SaliencyMap> {
    let mut counts = vec![0.0; width * height];
    let mut any = false;
    for (x, y) in fixations.pixels(width, height) {
        counts[y * width + x] += 1.0;
        any = true;
    }
    if !any {
        return Err(Error::EmptyFixations);
    }
    SaliencyMap::new(width, height, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::gaussian_kernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_fixation_peaks_at_its_pixel() {
        let fx = FixationSet::from_points(&[(32.0, 32.0)], 4.0).unwrap();
        let m = empirical_saliency(&fx, 64, 64, 1.0).unwrap();
        assert_eq!(m.argmax(), (32, 32));
        let peak = m.get(32, 32);
        assert_eq!(m.values().iter().filter(|v| **v == peak).count(), 1);
        assert!((m.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn subjects_are_interchangeable() {
        let two = FixationSet::new(
            vec![Fixation::new("a", 0.0, 10.0, 12.0), Fixation::new("b", 0.0, 10.0, 12.0)],
            2.0,
        )
        .unwrap();
        let one = FixationSet::new(
            vec![Fixation::new("a", 0.0, 10.0, 12.0), Fixation::new("a", 5.0, 10.0, 12.0)],
            2.0,
        )
        .unwrap();
        assert_eq!(
            empirical_saliency(&two, 32, 32, 1.0).unwrap(),
            empirical_saliency(&one, 32, 32, 1.0).unwrap()
        );
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h) = (40, 30);
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|_| (rng.gen_range(0.0..w as f64 - 1.0), rng.gen_range(0.0..h as f64 - 1.0)))
            .collect();
        let fx = FixationSet::from_points(&pts, 2.5).unwrap();
        let got = empirical_saliency(&fx, w, h, 1.0).unwrap();

        // Direct 2-D sum of the truncated, renormalized kernel around each impulse.
        let sigma = 2.5;
        let k = gaussian_kernel(sigma);
        let r = (k.len() / 2) as i64;
        let mut want = vec![0.0; w * h];
        for &(x, y) in &pts {
            let (fx, fy) = ((x + 0.5).floor() as i64, (y + 0.5).floor() as i64);
            for py in 0..h as i64 {
                for px in 0..w as i64 {
                    let (dx, dy) = (px - fx, py - fy);
                    if dx.abs() <= r && dy.abs() <= r {
                        want[py as usize * w + px as usize] += k[(dx + r) as usize] * k[(dy + r) as usize];
                    }
                }
            }
        }
        let total: f64 = want.iter().sum();
        for (a, b) in got.values().iter().zip(&want) {
            assert!((a - b / total).abs() < 1e-9);
        }
    }

    #[test]
    fn record_order_does_not_matter() {
        let pts = [(3.0, 4.0), (20.2, 7.7), (11.0, 15.4)];
        let a = FixationSet::from_points(&pts, 3.0).unwrap();
        let rev: Vec<_> = pts.iter().rev().copied().collect();
        let b = FixationSet::from_points(&rev, 3.0).unwrap();
        let ma = empirical_saliency(&a, 24, 24, 1.0).unwrap();
        let mb = empirical_saliency(&b, 24, 24, 1.0).unwrap();
        for (x, y) in ma.values().iter().zip(mb.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_bounds_only_is_empty() {
        let fx = FixationSet::from_points(&[(-3.0, 2.0), (100.0, 1.0)], 40.0).unwrap();
        assert!(matches!(empirical_saliency(&fx, 16, 16, 1.0), Err(Error::EmptyFixations)));
    }

    #[test]
    fn csv_roundtrip_and_header_check() {
        let text = "subject_id,timestamp_ms,x_px,y_px\ns1,0,10.5,20\ns1,16.7,11,21\ns2,3,4,5\n";
        let set = FixationSet::from_csv(text.as_bytes(), 40.0).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.records()[1], Fixation::new("s1", 16.7, 11.0, 21.0));
        let again = FixationSet::from_csv(set.to_csv().as_bytes(), 40.0).unwrap();
        assert_eq!(again, set);

        assert!(FixationSet::from_csv("a,b,c,d\n1,2,3,4\n".as_bytes(), 40.0).is_err());
        assert!(FixationSet::from_csv("subject_id,timestamp_ms,x_px,y_px\ns,0,x,1\n".as_bytes(), 40.0).is_err());
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let recs = vec![Fixation::new("s", 10.0, 0.0, 0.0), Fixation::new("s", 5.0, 0.0, 0.0)];
        assert!(FixationSet::new(recs, 40.0).is_err());
        assert!(FixationSet::from_points(&[(f64::NAN, 0.0)], 40.0).is_err());
        assert!(FixationSet::from_points(&[(0.0, 0.0)], 0.0).is_err());
    }
}
