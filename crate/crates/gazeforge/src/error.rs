use gazeforge_core::Error as CoreError;
use gazeforge_gateway::GatewayError;
use thiserror::Error;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    /// Malformed invocation or request body.
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    NotFound(String),

    /// A dependency such as the guidance index is not configured.
    #[error("{0}")]
    Unavailable(String),
}

impl AppError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    /// HTTP status for the service.
    pub fn status(&self) -> u16 {
        match self {
            Self::Usage(_) => 400,
            Self::NotFound(_) => 404,
            Self::Unavailable(_) => 503,
            Self::Gateway(GatewayError::InvalidRequest(_)) => 422,
            Self::Gateway(GatewayError::Core(_)) => 422,
            Self::Gateway(_) => 502,
            Self::Core(CoreError::Io { .. }) => 500,
            Self::Core(CoreError::EmptyDataset) => 409,
            Self::Core(_) => 422,
        }
    }

    /// Field path for invariant violations, e.g. `gaussians[0].sigma`.
    pub fn path(&self) -> Option<&str> {
        match self {
            Self::Core(CoreError::InvalidSpec { path, .. } | CoreError::InvalidCovariance { path, .. }) => Some(path),
            _ => None,
        }
    }

    /// CLI exit code: 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut body = serde_json::json!({ "error": self.to_string() });
        if let Some(path) = self.path() {
            body["path"] = path.into();
        }
        body
    }
}
