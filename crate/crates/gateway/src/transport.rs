use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// A raw HTTP answer. Any status is a reply; only failures to get one are
/// transport errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn ok(body: Vec<u8>) -> Self {
        Self { status: 200, body }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// Gateway-style statuses that usually clear up on retry.
    pub fn is_transient(&self) -> bool {
        matches!(self.status, 502..=504)
    }
}

/// POSTs JSON bodies to a backend. `Err` means no reply was received.
pub trait Transport: Send + Sync {
    fn post(&self, path: &str, body: &[u8]) -> Result<Reply, String>;
}

pub const TOKEN_ENV: &str = "GAZEFORGE_BACKEND_TOKEN";

/// Where to send requests. An endpoint of `mock` selects the in-process mock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BackendConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Environment variable holding a bearer token, if any.
    pub token_env: String,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "mock".into(),
            timeout_ms: 60_000,
            token_env: TOKEN_ENV.into(),
        }
    }
}

impl BackendConfig {
    pub fn with_endpoint(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            ..Self::default()
        }
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock"
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    base: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &BackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        Self {
            agent,
            base: config.endpoint.trim_end_matches('/').to_string(),
            token,
        }
    }
}

impl Transport for HttpTransport {
    fn post(&self, path: &str, body: &[u8]) -> Result<Reply, String> {
        let mut req = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_vec().map_err(|e| e.to_string())?;
        Ok(Reply { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Forward to the wrapped transport.
    Pass,
    /// Fail without a reply, as a dropped connection would.
    Drop,
    /// Answer with this status and an error body.
    Status(u16),
}

/// Wraps a transport and replays a scripted list of faults, one per call.
/// Calls past the end of the script pass through.
pub struct FaultInjector {
    inner: Arc<dyn Transport>,
    script: Mutex<VecDeque<Fault>>,
    calls: AtomicUsize,
}

impl FaultInjector {
    pub fn new(inner: Arc<dyn Transport>, script: impl IntoIterator<Item = Fault>) -> Self {
        Self {
            inner,
            script: Mutex::new(script.into_iter().collect()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for FaultInjector {
    fn post(&self, path: &str, body: &[u8]) -> Result<Reply, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fault = self.script.lock().expect("fault script lock").pop_front().unwrap_or(Fault::Pass);
        match fault {
            Fault::Pass => self.inner.post(path, body),
            Fault::Drop => Err("injected: connection dropped".into()),
            Fault::Status(status) => Ok(Reply {
                status,
                body: crate::protocol::WireResponse::error(format!("injected status {status}")).to_bytes(),
            }),
        }
    }
}
