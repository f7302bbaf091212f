//! Minimal JSON-over-HTTP boundary shared by the remote embedder and the
//! remote LLM adapter, so both can be exercised without a network.

use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Connection failure, timeout, or non-2xx status.
    Request(String),
    /// The body was not valid JSON.
    Decode(String),
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Request(m) => write!(f, "request failed: {m}"),
            TransportError::Decode(m) => write!(f, "invalid response body: {m}"),
        }
    }
}

pub trait JsonTransport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError>;
}

/// Blocking reqwest client. Must not be called from inside an async runtime
/// thread; async callers wrap it in `spawn_blocking`.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Request(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl JsonTransport for HttpTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.client.post(url).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| TransportError::Request(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError::Request(format!("{url} returned {status}")));
        }
        resp.json::<Value>()
            .map_err(|e| TransportError::Decode(e.to_string()))
    }
}
