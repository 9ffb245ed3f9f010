use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{RetrievalError, DEFAULT_TIMEOUT};

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl ExternalConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), api_key: None, timeout: DEFAULT_TIMEOUT }
    }

    /// Reads `MODEL_ENDPOINT` and the optional `MODEL_API_KEY`.
    pub fn from_env() -> Result<Self, RetrievalError> {
        let endpoint = std::env::var("MODEL_ENDPOINT")
            .ok()
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| RetrievalError::NotConfigured("MODEL_ENDPOINT is not set".into()))?;
        let mut config = Self::new(endpoint);
        config.api_key = std::env::var("MODEL_API_KEY").ok().filter(|s| !s.is_empty());
        Ok(config)
    }
}

/// JSON body posted to the model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub prompt: String,
    /// Base64 of the encoded image, when one accompanies the request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

/// JSON body the model endpoint answers with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub output: String,
}

/// Sends one prompt and returns the model's text output.
pub fn call_model(config: &ExternalConfig, prompt: &str, image: Option<&[u8]>) -> Result<String, RetrievalError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(config.timeout))
        .build()
        .into();
    let body = ModelRequest {
        prompt: prompt.to_string(),
        image: image.map(|bytes| base64::engine::general_purpose::STANDARD.encode(bytes)),
    };
    let mut request = agent.post(&config.endpoint);
    if let Some(key) = &config.api_key {
        request = request.header("Authorization", format!("Bearer {key}"));
    }
    let map_err = |e: ureq::Error| match e {
        ureq::Error::Timeout(_) => RetrievalError::Timeout(config.timeout),
        other => RetrievalError::Endpoint(other.to_string()),
    };
    let mut response = request.send_json(&body).map_err(map_err)?;
    let parsed: ModelResponse = response.body_mut().read_json().map_err(map_err)?;
    Ok(parsed.output)
}
