use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{sha256_hex, GatewayError};

/// Connection and decoding settings for one model. The credential itself is
/// never part of the configuration, only the name of the variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model: String,
    pub api_key_var: Option<String>,
    pub timeout_ms: u64,
    pub max_parallel: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    /// Additional attempts after the first.
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for ModelEndpoint {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            model: String::new(),
            api_key_var: None,
            timeout_ms: 120_000,
            max_parallel: 8,
            temperature: 0.0,
            top_p: 1.0,
            max_new_tokens: 1024,
            retries: 3,
            backoff_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

impl ModelEndpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::Config(m.to_string()));
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return bad("base_url must be an http(s) URL");
        }
        if self.model.is_empty() {
            return bad("model is empty");
        }
        if self.max_parallel == 0 {
            return bad("max_parallel must be positive");
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive");
        }
        if !(0.0..=2.0).contains(&self.temperature) || !(0.0..=1.0).contains(&self.top_p) || self.top_p == 0.0 {
            return bad("temperature must lie in [0, 2] and top_p in (0, 1]");
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be positive");
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    /// Delay before retry number `attempt` (1-based), doubling up to the cap.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        Duration::from_millis(self.backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }

    /// Digest of every setting that can change a response. Transport-only
    /// settings (timeouts, parallelism, retries) are excluded so tuning them
    /// keeps cached answers valid.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::json!({
            "base_url": self.base_url.trim_end_matches('/'),
            "model": self.model,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_new_tokens": self.max_new_tokens,
        });
        sha256_hex(&[canonical.to_string().as_bytes()])
    }
}
