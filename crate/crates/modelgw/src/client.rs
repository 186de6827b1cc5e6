use std::fmt;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use reqwest::header::RETRY_AFTER;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{image_hash, prompt_hash, GatewayError, ModelEndpoint};

const EXCERPT_CHARS: usize = 200;
/// Upper bound on a server-requested wait.
const MAX_RETRY_AFTER: Duration = Duration::from_secs(120);

/// One question: a prompt and the PNG images it refers to, in order.
#[derive(Debug, Clone)]
pub struct QueryRequest {
    pub stimulus_id: String,
    pub prompt: String,
    pub images: Vec<Vec<u8>>,
}

/// Everything needed to audit or replay one answered query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub stimulus_id: String,
    pub prompt: String,
    pub prompt_hash: String,
    pub image_hashes: Vec<String>,
    pub raw_response: String,
    pub latency_ms: u64,
    pub attempts: u32,
    pub fingerprint: String,
}

/// Chat-completions client for one endpoint.
pub struct Client {
    endpoint: ModelEndpoint,
    fingerprint: String,
    token: Option<String>,
    http: reqwest::Client,
}

impl fmt::Debug for Client {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Client")
            .field("endpoint", &self.endpoint)
            .field("fingerprint", &self.fingerprint)
            .field("token", &self.token.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

fn excerpt(s: &str) -> String {
    let mut out: String = s.chars().take(EXCERPT_CHARS).collect();
    if out.len() < s.len() {
        out.push('…');
    }
    out
}

enum Attempt {
    Done(String),
    Fatal(GatewayError),
    Retry {
        error: GatewayError,
        wait: Option<Duration>,
    },
}

impl Client {
    /// Reads the credential from the environment variable named by the
    /// endpoint, if any.
    pub fn new(endpoint: ModelEndpoint) -> Result<Self, GatewayError> {
        let token = match &endpoint.api_key_var {
            Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::MissingCredential(var.clone()))?),
            None => None,
        };
        Self::with_token(endpoint, token)
    }

    pub fn with_token(endpoint: ModelEndpoint, token: Option<String>) -> Result<Self, GatewayError> {
        endpoint.validate()?;
        let http = reqwest::Client::builder()
            .build()
            .map_err(|e| GatewayError::TransportError(e.to_string()))?;
        Ok(Self {
            fingerprint: endpoint.fingerprint(),
            endpoint,
            token,
            http,
        })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn request_body(&self, req: &QueryRequest) -> Value {
        let mut content: Vec<Value> = req
            .images
            .iter()
            .map(|png| {
                json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:image/png;base64,{}", STANDARD.encode(png))},
                })
            })
            .collect();
        content.push(json!({"type": "text", "text": req.prompt}));
        json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.endpoint.temperature,
            "top_p": self.endpoint.top_p,
            "max_tokens": self.endpoint.max_new_tokens,
        })
    }

    async fn attempt(&self, body: &Value) -> Attempt {
        let mut rb = self
            .http
            .post(self.endpoint.completions_url())
            .timeout(self.endpoint.timeout())
            .json(body);
        if let Some(t) = &self.token {
            rb = rb.bearer_auth(t);
        }
        let resp = match rb.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry {
                    error: GatewayError::Timeout { attempts: 0 },
                    wait: None,
                }
            }
            Err(e) => {
                return Attempt::Retry {
                    error: GatewayError::TransportError(e.to_string()),
                    wait: None,
                }
            }
        };
        let status = resp.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Attempt::Fatal(GatewayError::AuthFailure {
                status: status.as_u16(),
            });
        }
        if status == StatusCode::TOO_MANY_REQUESTS {
            let wait = resp
                .headers()
                .get(RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|s| s.is_finite() && *s >= 0.0)
                .map(|s| Duration::from_secs_f64(s).min(MAX_RETRY_AFTER));
            return Attempt::Retry {
                error: GatewayError::RateLimited { attempts: 0 },
                wait,
            };
        }
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry {
                    error: GatewayError::Timeout { attempts: 0 },
                    wait: None,
                }
            }
            Err(e) => {
                return Attempt::Retry {
                    error: GatewayError::TransportError(e.to_string()),
                    wait: None,
                }
            }
        };
        if status.is_server_error() {
            return Attempt::Retry {
                error: GatewayError::TransportError(format!("HTTP {status}: {}", excerpt(&text))),
                wait: None,
            };
        }
        if !status.is_success() {
            return Attempt::Fatal(GatewayError::TransportError(format!(
                "HTTP {status}: {}",
                excerpt(&text)
            )));
        }
        match extract_content(&text) {
            Some(content) => Attempt::Done(content),
            None => Attempt::Fatal(GatewayError::TransportError(format!(
                "malformed response body: {}",
                excerpt(&text)
            ))),
        }
    }

    /// Sends one query, retrying transient failures with capped exponential
    /// backoff. A rate-limit response waits at least as long as its
    /// `Retry-After` header asks.
    pub async fn query(&self, req: &QueryRequest) -> Result<QueryRecord, GatewayError> {
        let body = self.request_body(req);
        let start = Instant::now();
        let max_attempts = self.endpoint.retries + 1;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body).await {
                Attempt::Done(raw_response) => {
                    return Ok(QueryRecord {
                        stimulus_id: req.stimulus_id.clone(),
                        prompt: req.prompt.clone(),
                        prompt_hash: prompt_hash(&req.prompt),
                        image_hashes: req.images.iter().map(|i| image_hash(i)).collect(),
                        raw_response,
                        latency_ms: start.elapsed().as_millis() as u64,
                        attempts,
                        fingerprint: self.fingerprint.clone(),
                    })
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { error, wait } => {
                    if attempts >= max_attempts {
                        return Err(match error {
                            GatewayError::Timeout { .. } => GatewayError::Timeout { attempts },
                            GatewayError::RateLimited { .. } => GatewayError::RateLimited { attempts },
                            other => other,
                        });
                    }
                    let backoff = self.endpoint.backoff(attempts);
                    tokio::time::sleep(wait.map_or(backoff, |w| w.max(backoff))).await;
                }
            }
        }
    }
}

/// Pulls the assistant text out of a chat-completions response. Content given
/// as a list of parts is concatenated.
pub fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let content = v.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        Value::Null => Some(String::new()),
        _ => None,
    }
}
