use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use gazeforge_core::formats::png;
use gazeforge_core::SaliencySequence;

use crate::error::{GatewayError, Result};
use crate::mock::MockBackend;
use crate::protocol::{GenerationRequest, GenerationResponse, WireResponse};
use crate::transport::{BackendConfig, HttpTransport, Reply, Transport};

/// Retries after the first attempt, each preceded by its backoff delay.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            backoff: [500, 1000, 2000].map(Duration::from_millis).to_vec(),
        }
    }
}

impl RetryPolicy {
    /// Same retry count, no waiting. For tests.
    pub fn immediate() -> Self {
        Self {
            backoff: vec![Duration::ZERO; 3],
        }
    }

    pub fn none() -> Self {
        Self { backoff: Vec::new() }
    }
}

/// Consecutive frame failures that abort a sequence.
pub const MAX_CONSECUTIVE_FAILURES: usize = 3;
/// In-flight requests when concurrent sequence generation is enabled.
pub const SEQUENCE_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceParams {
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub steps: u32,
    pub concurrent: bool,
}

/// One entry per frame, in frame order.
#[derive(Debug)]
pub struct SequenceOutcome {
    pub frames: Vec<Result<GenerationResponse>>,
}

impl SequenceOutcome {
    pub fn failures(&self) -> usize {
        self.frames.iter().filter(|f| f.is_err()).count()
    }
}

#[derive(Clone)]
pub struct GatewayClient {
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
}

impl GatewayClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self {
            transport,
            retry: RetryPolicy::default(),
        }
    }

    pub fn from_config(config: &BackendConfig) -> Self {
        if config.is_mock() {
            Self::new(Arc::new(MockBackend::new()))
        } else {
            Self::new(Arc::new(HttpTransport::new(config)))
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// POSTs with retries on dropped connections and 502/503/504. Returns the
    /// body of the first 2xx reply.
    pub fn call(&self, path: &str, body: &[u8]) -> Result<Vec<u8>> {
        let attempts = self.retry.backoff.len() as u32 + 1;
        let mut last: std::result::Result<Reply, String> = Err(String::new());
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.retry.backoff[attempt as usize - 1];
                log::warn!("retrying {path} in {wait:?} (attempt {} of {attempts})", attempt + 1);
                std::thread::sleep(wait);
            }
            last = self.transport.post(path, body);
            match &last {
                Ok(reply) if reply.is_success() => return Ok(last.unwrap().body),
                Ok(reply) if !reply.is_transient() => return Err(backend_error(reply)),
                _ => {}
            }
        }
        Err(match last {
            Ok(reply) => backend_error(&reply),
            Err(e) => GatewayError::Unreachable { attempts, last: e },
        })
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse> {
        let started = Instant::now();
        let body = self.call("/generate", &req.wire_bytes())?;
        let wire: WireResponse =
            serde_json::from_slice(&body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        let (Some(image_b64), Some(backend_id)) = (wire.image_b64, wire.backend_id) else {
            return Err(GatewayError::MalformedResponse("missing image_b64 or backend_id".into()));
        };
        let image_bytes = STANDARD
            .decode(image_b64.as_bytes())
            .map_err(|e| GatewayError::MalformedResponse(format!("image_b64: {e}")))?;
        let image = png::decode(&image_bytes).map_err(|e| GatewayError::MalformedResponse(format!("image: {e}")))?;
        let want = (req.width() as usize, req.height() as usize);
        if image.dims() != want {
            return Err(GatewayError::MalformedResponse(format!(
                "image is {}x{}, requested {}x{}",
                image.width(),
                image.height(),
                want.0,
                want.1
            )));
        }
        Ok(GenerationResponse {
            image_bytes,
            backend_id,
            elapsed_ms: started.elapsed().as_millis() as u64,
        })
    }

    /// One request per frame, frame `t` seeded with `seed + t` (wrapping).
    /// Failed frames are recorded; three failures in a row abort.
    pub fn generate_sequence(&self, prompt: &str, conditioning: &SaliencySequence, params: SequenceParams) -> Result<SequenceOutcome> {
        let requests = conditioning
            .frames()
            .iter()
            .enumerate()
            .map(|(t, frame)| {
                GenerationRequest::new(
                    prompt,
                    frame,
                    params.width,
                    params.height,
                    params.seed.wrapping_add(t as u64),
                    params.steps,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let chunk = if params.concurrent { SEQUENCE_CONCURRENCY } else { 1 };
        let mut frames = Vec::with_capacity(requests.len());
        let mut consecutive = 0;
        for batch in requests.chunks(chunk) {
            let results: Vec<Result<GenerationResponse>> = if batch.len() == 1 {
                vec![self.generate(&batch[0])]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = batch.iter().map(|r| s.spawn(move || self.generate(r))).collect();
                    handles.into_iter().map(|h| h.join().expect("generate thread panicked")).collect()
                })
            };
            for result in results {
                if result.is_err() {
                    consecutive += 1;
                } else {
                    consecutive = 0;
                }
                frames.push(result);
                if consecutive >= MAX_CONSECUTIVE_FAILURES {
                    let failures = frames
                        .iter()
                        .enumerate()
                        .filter_map(|(i, f)| f.as_ref().err().map(|e| (i, e.to_string())))
                        .collect();
                    return Err(GatewayError::SequenceAborted {
                        frame: frames.len() - 1,
                        consecutive,
                        failures,
                    });
                }
            }
        }
        Ok(SequenceOutcome { frames })
    }
}

fn backend_error(reply: &Reply) -> GatewayError {
    let message = serde_json::from_slice::<WireResponse>(&reply.body)
        .ok()
        .and_then(|w| w.error)
        .unwrap_or_else(|| String::from_utf8_lossy(&reply.body).chars().take(200).collect());
    GatewayError::Backend {
        status: Some(reply.status),
        message,
    }
}
