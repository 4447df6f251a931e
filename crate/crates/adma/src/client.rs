//! Blocking HTTP client for the API.

use std::time::Duration;

use adma_core::ErrorCode;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot reach server: {0}")]
    Transport(String),
    #[error("{code}: {message}")]
    Api { code: ErrorCode, message: String, body: Vec<u8> },
}

#[derive(Deserialize)]
struct Envelope {
    error: EnvelopeBody,
}

#[derive(Deserialize)]
struct EnvelopeBody {
    code: String,
    message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

pub struct Client {
    base: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client").field("base", &self.base).finish_non_exhaustive()
    }
}

impl Client {
    /// The key travels in a header, never in the URL.
    pub fn new(base: &str, key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_connect(Some(Duration::from_secs(10)))
            .build()
            .into();
        Client { base: base.trim_end_matches('/').to_string(), key, agent }
    }

    /// Sends a request and returns the raw success body.
    pub fn call(&self, method: Method, endpoint: &str, params: &[(&str, &str)], body: Option<&[u8]>) -> Result<Vec<u8>, ClientError> {
        let url = format!("{}{endpoint}", self.base);
        let transport = |e: ureq::Error| ClientError::Transport(e.to_string());
        let result = match method {
            Method::Get => {
                let mut req = self.agent.get(&url);
                for (k, v) in params {
                    req = req.query(*k, *v);
                }
                if let Some(key) = &self.key {
                    req = req.header("x-api-key", key);
                }
                req.call()
            }
            Method::Post => {
                let mut req = self.agent.post(&url);
                for (k, v) in params {
                    req = req.query(*k, *v);
                }
                if let Some(key) = &self.key {
                    req = req.header("x-api-key", key);
                }
                req.send(body.unwrap_or(&[]))
            }
        };
        let mut resp = result.map_err(transport)?;
        let status = resp.status().as_u16();
        let bytes = resp.body_mut().with_config().limit(u64::MAX).read_to_vec().map_err(transport)?;
        if status == 200 {
            return Ok(bytes);
        }
        let (code, message) = match serde_json::from_slice::<Envelope>(&bytes) {
            Ok(env) => (
                ErrorCode::parse(&env.error.code).unwrap_or(ErrorCode::Internal),
                env.error.message,
            ),
            Err(_) => (ErrorCode::Internal, format!("HTTP {status}")),
        };
        Err(ClientError::Api { code, message, body: bytes })
    }
}
