//! Client side of the saliency-conditioned generation protocol, a mock
//! backend that honours the same contract, and a stub saliency predictor.

pub mod client;
pub mod embedder;
pub mod error;
pub mod mock;
pub mod predictor;
pub mod protocol;
pub mod transport;

pub use client::{GatewayClient, RetryPolicy, SequenceOutcome, SequenceParams};
pub use embedder::RemoteEmbedder;
pub use error::{GatewayError, Result};
pub use mock::{MockBackend, MOCK_BACKEND_ID};
pub use predictor::{Prediction, SaliencyPredictor, StubPredictor};
pub use protocol::{GenerationRequest, GenerationResponse, WireRequest, WireResponse, DEFAULT_SIZE};
pub use transport::{BackendConfig, Fault, FaultInjector, HttpTransport, Reply, Transport, TOKEN_ENV};
