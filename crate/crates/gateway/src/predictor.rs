use gazeforge_core::formats::png;
use gazeforge_core::{Boundary, SaliencyMap, SaliencySequence};

use crate::error::Result;

/// A predicted saliency map plus flags for inputs that have no usable
/// structure. A zero-mass prediction is an all-zero map.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub map: SaliencyMap,
    pub zero_mass: bool,
    pub constant: bool,
}

/// Image and video saliency models live outside this crate; this is the seam
/// they plug into.
pub trait SaliencyPredictor: Send + Sync {
    fn predict_image(&self, image: &[u8]) -> Result<Prediction>;

    /// Frames are resampled to the first frame's dimensions.
    fn predict_video(&self, frames: &[Vec<u8>], fps: f64) -> Result<SaliencySequence> {
        let mut maps: Vec<SaliencyMap> = Vec::with_capacity(frames.len());
        for frame in frames {
            let map = self.predict_image(frame)?.map;
            let map = match maps.first() {
                Some(first) if first.dims() != map.dims() => map.resample(first.width(), first.height())?,
                _ => map,
            };
            maps.push(map);
        }
        Ok(SaliencySequence::new(maps, fps)?)
    }
}

/// Luminance, Gaussian blur, max-normalize. Closes the generation loop in
/// tests without a learned model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StubPredictor {
    pub sigma: f64,
}

impl Default for StubPredictor {
    fn default() -> Self {
        Self { sigma: 2.0 }
    }
}

impl SaliencyPredictor for StubPredictor {
    fn predict_image(&self, image: &[u8]) -> Result<Prediction> {
        let luma = png::decode(image)?;
        let blurred = luma.blur(self.sigma, Boundary::Clamp);
        let constant = blurred.is_constant();
        match blurred.normalize_to_max() {
            Ok(map) => Ok(Prediction { map, zero_mass: false, constant }),
            Err(gazeforge_core::Error::DegenerateMap(_)) => Ok(Prediction {
                map: SaliencyMap::zeros(luma.width(), luma.height())?,
                zero_mass: true,
                constant: true,
            }),
            Err(e) => Err(e.into()),
        }
    }
}
