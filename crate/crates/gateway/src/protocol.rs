//! Wire format shared by the client, the in-process mock and the mock server.
//!
//! Request: `{"prompt","conditioning":{"w","h","data_b64"},"seed","steps"}`,
//! where `data_b64` is the base64 SMAP payload of the conditioning map.
//! Success: `{"image_b64","backend_id"}`. Failure: `{"error"}` with a non-2xx
//! status. Keys serialize in declaration order, so a fixed request always
//! produces the same bytes.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use gazeforge_core::formats::smap::EncodedMap;
use gazeforge_core::SaliencyMap;
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, Result};

/// Conditioning resolution used when the caller does not choose one.
pub const DEFAULT_SIZE: u32 = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRequest {
    pub prompt: String,
    pub conditioning: EncodedMap,
    pub seed: u64,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl WireResponse {
    pub fn image(image: &[u8], backend_id: &str) -> Self {
        Self {
            image_b64: Some(STANDARD.encode(image)),
            backend_id: Some(backend_id.to_string()),
            error: None,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            error: Some(message.into()),
            ..Self::default()
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("plain struct serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embedding: Vec<f64>,
}

/// A validated generation request. The conditioning map is max-normalized and
/// resampled to `width x height` at construction and never changes afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    prompt: String,
    conditioning: SaliencyMap,
    seed: u64,
    steps: u32,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, conditioning: &SaliencyMap, width: u32, height: u32, seed: u64, steps: u32) -> Result<Self> {
        for (name, v) in [("width", width), ("height", height)] {
            if v == 0 || v % 8 != 0 {
                return Err(GatewayError::InvalidRequest(format!("{name} must be a positive multiple of 8, got {v}")));
            }
        }
        if steps == 0 {
            return Err(GatewayError::InvalidRequest("steps must be > 0".into()));
        }
        let normalized = conditioning
            .normalize_to_max()
            .map_err(|e| GatewayError::InvalidRequest(format!("conditioning: {e}")))?;
        let conditioning = normalized.resample(width as usize, height as usize)?;
        Ok(Self {
            prompt: prompt.into(),
            conditioning,
            seed,
            steps,
        })
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn conditioning(&self) -> &SaliencyMap {
        &self.conditioning
    }

    pub fn width(&self) -> u32 {
        self.conditioning.width() as u32
    }

    pub fn height(&self) -> u32 {
        self.conditioning.height() as u32
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// Same request with a different seed; used for per-frame salts.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn to_wire(&self) -> WireRequest {
        WireRequest {
            prompt: self.prompt.clone(),
            conditioning: EncodedMap::from_map(&self.conditioning),
            seed: self.seed,
            steps: self.steps,
        }
    }

    pub fn wire_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_wire()).expect("plain struct serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResponse {
    /// PNG payload.
    pub image_bytes: Vec<u8>,
    pub backend_id: String,
    pub elapsed_ms: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> SaliencyMap {
        SaliencyMap::from_fn(w, h, |x, y| (x + y) as f64).unwrap()
    }

    #[test]
    fn validation_happens_before_anything_else() {
        let c = ramp(8, 8);
        assert!(matches!(GenerationRequest::new("p", &c, 513, 512, 0, 20), Err(GatewayError::InvalidRequest(_))));
        assert!(GenerationRequest::new("p", &c, 0, 8, 0, 20).is_err());
        assert!(GenerationRequest::new("p", &c, 8, 8, 0, 0).is_err());
        assert!(GenerationRequest::new("p", &SaliencyMap::zeros(8, 8).unwrap(), 8, 8, 0, 1).is_err());
    }

    #[test]
    fn conditioning_is_max_normalized_and_resized() {
        let r = GenerationRequest::new("p", &ramp(4, 4).scaled(7.0).unwrap(), 16, 8, 3, 20).unwrap();
        assert_eq!(r.conditioning().dims(), (16, 8));
        assert!((r.conditioning().max() - 1.0).abs() < 1e-12);
        assert!(r.conditioning().values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn wire_bytes_are_stable_and_ordered() {
        let r = GenerationRequest::new("a cat", &ramp(8, 8), 8, 8, 42, 30).unwrap();
        let a = r.wire_bytes();
        assert_eq!(a, r.clone().wire_bytes());
        let text = String::from_utf8(a).unwrap();
        let keys = ["\"prompt\"", "\"conditioning\"", "\"w\"", "\"h\"", "\"data_b64\"", "\"seed\"", "\"steps\""];
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|p| p[0] < p[1]), "{text}");
        let back: WireRequest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r.to_wire());
    }
}
