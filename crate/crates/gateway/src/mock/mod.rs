//! Deterministic stand-in for a saliency-conditioned generation backend.
//!
//! `/generate` answers with an 8-bit gray PNG whose value at each pixel is
//! `round(255 * c)` for the conditioning value `c`. Prompt, seed and steps
//! are validated but otherwise ignored. `/embed` serves the hashed embedder.

pub mod server;

use std::sync::atomic::{AtomicU64, Ordering};

use gazeforge_core::formats::png;
use gazeforge_core::optimizer::{HashedEmbedder, TextEmbedder};
use image::GrayImage;

use crate::protocol::{EmbedRequest, EmbedResponse, WireRequest, WireResponse};
use crate::transport::{Reply, Transport};

pub const MOCK_BACKEND_ID: &str = "mock-backend/v1";

pub struct MockBackend {
    embedder: HashedEmbedder,
    fail_first: AtomicU64,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockBackend {
    pub fn new() -> Self {
        Self {
            embedder: HashedEmbedder::default(),
            fail_first: AtomicU64::new(0),
        }
    }

    /// Answers the next `n` requests with 503.
    pub fn failing_first(n: u64) -> Self {
        let m = Self::new();
        m.fail_first.store(n, Ordering::SeqCst);
        m
    }

    pub fn handle(&self, path: &str, body: &[u8]) -> Reply {
        let pending = self.fail_first.load(Ordering::SeqCst);
        if pending > 0 && self.fail_first.compare_exchange(pending, pending - 1, Ordering::SeqCst, Ordering::SeqCst).is_ok() {
            return error(503, "warming up");
        }
        match path {
            "/generate" => self.generate(body),
            "/embed" => self.embed(body),
            other => error(404, &format!("no route {other}")),
        }
    }

    fn generate(&self, body: &[u8]) -> Reply {
        let req: WireRequest = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return error(400, &format!("bad request: {e}")),
        };
        if req.steps == 0 {
            return error(422, "steps must be > 0");
        }
        let map = match req.conditioning.decode() {
            Ok(m) => m,
            Err(e) => return error(422, &format!("conditioning: {e}")),
        };
        if map.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return error(422, "conditioning values must lie in [0, 1]");
        }
        let pixels = map.values().iter().map(|c| (255.0 * c).round() as u8).collect();
        let image = GrayImage::from_raw(map.width() as u32, map.height() as u32, pixels).expect("buffer sized from map");
        match png::encode_gray(&image) {
            Ok(bytes) => Reply::ok(WireResponse::image(&bytes, MOCK_BACKEND_ID).to_bytes()),
            Err(e) => error(500, &e.to_string()),
        }
    }

    fn embed(&self, body: &[u8]) -> Reply {
        let req: EmbedRequest = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return error(400, &format!("bad request: {e}")),
        };
        match self.embedder.embed(&req.text) {
            Ok(v) => Reply::ok(
                serde_json::to_vec(&EmbedResponse {
                    embedding: v.into_iter().map(f64::from).collect(),
                })
                .expect("plain struct serializes"),
            ),
            Err(e) => error(422, &e.to_string()),
        }
    }
}

fn error(status: u16, message: &str) -> Reply {
    Reply {
        status,
        body: WireResponse::error(message).to_bytes(),
    }
}

impl Transport for MockBackend {
    fn post(&self, path: &str, body: &[u8]) -> Result<Reply, String> {
        Ok(self.handle(path, body))
    }
}
