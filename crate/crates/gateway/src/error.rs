use thiserror::Error;

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GatewayError {
    /// Rejected before any network traffic.
    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("backend unreachable after {attempts} attempts: {last}")]
    Unreachable { attempts: u32, last: String },

    #[error("backend error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Backend { status: Option<u16>, message: String },

    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    #[error("sequence aborted at frame {frame} after {consecutive} consecutive failures")]
    SequenceAborted { frame: usize, consecutive: usize, failures: Vec<(usize, String)> },

    #[error(transparent)]
    Core(#[from] gazeforge_core::Error),
}

impl GatewayError {
    /// Whether the failure came from the backend side rather than the request.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            Self::Unreachable { .. } | Self::Backend { .. } | Self::MalformedResponse(_) | Self::SequenceAborted { .. }
        )
    }
}
