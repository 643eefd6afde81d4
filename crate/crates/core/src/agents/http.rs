use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AgentRequest, AgentResponse, CompletionProvider, ProviderError, TokenProb};
use crate::error::{Error, Result};

/// Connection settings for a remote completion endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpProviderConfig {
    pub id: String,
    pub endpoint: String,
    pub model: String,
    pub timeout: Duration,
}

/// Body sent to a remote provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub logprobs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTokenLogprob {
    pub token: String,
    pub logprob: f64,
}

/// Body returned by a remote provider. Vendor adapters translate to this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub token_logprobs: Option<Vec<WireTokenLogprob>>,
    #[serde(default)]
    pub refusal: Option<String>,
}

/// Completion provider speaking the JSON wire contract over HTTP POST.
///
/// The API key is read from `KGF_<ID>_KEY` (id uppercased, `-` as `_`).
pub struct HttpProvider {
    config: HttpProviderConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self> {
        if !(config.endpoint.starts_with("http://") || config.endpoint.starts_with("https://")) {
            return Err(Error::Config(format!(
                "provider {} endpoint must be an http(s) URL, got {:?}",
                config.id, config.endpoint
            )));
        }
        let api_key = std::env::var(Self::key_var(&config.id)).ok();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpProvider { config, api_key, agent })
    }

    pub fn key_var(id: &str) -> String {
        format!("KGF_{}_KEY", id.to_uppercase().replace('-', "_"))
    }

    pub fn wire_request(&self, request: &AgentRequest) -> WireRequest {
        WireRequest {
            model: self.config.model.clone(),
            prompt: request.prompt.clone(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            logprobs: request.want_token_probs,
        }
    }
}

impl CompletionProvider for HttpProvider {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn complete_once(&self, request: &AgentRequest) -> std::result::Result<AgentResponse, ProviderError> {
        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(self.wire_request(request))
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 429 | 500..=599 => {
                return Err(ProviderError::Transient(format!("HTTP {status}: {body}")))
            }
            _ => return Err(ProviderError::Malformed(format!("HTTP {status}: {body}"))),
        }
        let wire: WireResponse = serde_json::from_str(&body)
            .map_err(|e| ProviderError::Malformed(format!("response is not the expected JSON: {e}")))?;
        if let Some(reason) = wire.refusal {
            return Err(ProviderError::Refusal(reason));
        }
        let token_probs = wire.token_logprobs.map(|toks| {
            toks.into_iter()
                .map(|t| TokenProb {
                    token: t.token,
                    prob: t.logprob.exp().min(1.0),
                })
                .collect()
        });
        Ok(AgentResponse {
            text: wire.text,
            token_probs,
            provider_id: self.config.id.clone(),
        })
    }
}
