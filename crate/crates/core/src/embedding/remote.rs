use std::sync::Arc;

use serde_json::{json, Value};

use super::{Embedder, EmbeddingError, EmbeddingVector};
use crate::transport::JsonTransport;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteEmbedderConfig {
    pub url: String,
    pub model: String,
    pub dim: usize,
    pub api_key: Option<String>,
}

/// Embedder backed by an HTTP endpoint that takes `{"model", "input"}` and
/// answers either `{"embedding": [...]}` or `{"data": [{"embedding": [...]}]}`.
pub struct HttpEmbedder {
    config: RemoteEmbedderConfig,
    transport: Arc<dyn JsonTransport>,
}

impl HttpEmbedder {
    pub fn new(config: RemoteEmbedderConfig, transport: Arc<dyn JsonTransport>) -> Self {
        HttpEmbedder { config, transport }
    }
}

fn extract_vector(body: &Value) -> Option<Vec<f64>> {
    let arr = body
        .get("embedding")
        .or_else(|| body.get("data")?.get(0)?.get("embedding"))?
        .as_array()?;
    arr.iter().map(Value::as_f64).collect()
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> String {
        format!("remote/{}/d{}", self.config.model, self.config.dim)
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let body = json!({ "model": self.config.model, "input": text });
        let resp = self
            .transport
            .post_json(&self.config.url, self.config.api_key.as_deref(), &body)
            .map_err(|e| EmbeddingError::EmbedderUnavailable(e.to_string()))?;
        let values = extract_vector(&resp).ok_or_else(|| {
            EmbeddingError::EmbedderUnavailable("response has no embedding array".into())
        })?;
        if values.len() != self.config.dim {
            return Err(EmbeddingError::DimensionMismatch {
                left: self.config.dim,
                right: values.len(),
            });
        }
        EmbeddingVector::normalized(values)
    }
}
