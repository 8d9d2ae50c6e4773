use gazeforge_core::optimizer::embed::normalize_embedding;
use gazeforge_core::optimizer::TextEmbedder;

use crate::client::GatewayClient;
use crate::protocol::{EmbedRequest, EmbedResponse};

/// Text embedder backed by a remote `/embed` endpoint, with the gateway's
/// retry policy. Returned vectors are re-normalized to unit length.
pub struct RemoteEmbedder {
    client: GatewayClient,
    id: String,
    dimension: usize,
}

impl RemoteEmbedder {
    /// `id` names the remote model; an index built with one id refuses
    /// queries embedded under another.
    pub fn new(client: GatewayClient, id: impl Into<String>, dimension: usize) -> Self {
        Self {
            client,
            id: id.into(),
            dimension,
        }
    }
}

impl TextEmbedder for RemoteEmbedder {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, prompt: &str) -> gazeforge_core::Result<Vec<f32>> {
        let body = serde_json::to_vec(&EmbedRequest { text: prompt.into() })?;
        let reply = self
            .client
            .call("/embed", &body)
            .map_err(|e| gazeforge_core::Error::Embedding(e.to_string()))?;
        let resp: EmbedResponse = serde_json::from_slice(&reply)
            .map_err(|e| gazeforge_core::Error::Embedding(format!("malformed embedding response: {e}")))?;
        if resp.embedding.len() != self.dimension {
            return Err(gazeforge_core::Error::Embedding(format!(
                "remote returned {} values, expected {}",
                resp.embedding.len(),
                self.dimension
            )));
        }
        normalize_embedding(&resp.embedding)
    }
}
