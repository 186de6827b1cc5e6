//! A scriptable in-process chat-completions server.
//!
//! Answers are looked up by the digest of the first attached image, so a
//! stub primed with ground truth echoes it back. Faults queued with
//! [`StubState::push_fault`] are served one per request before normal
//! answers resume.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Value};
use tokio::task::JoinHandle;

use crate::image_hash;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    Status(u16),
    RateLimited {
        retry_after_secs: u64,
    },
    /// 200 with a body that is not a chat completion.
    Malformed,
    /// Sleeps before answering normally.
    Delay(Duration),
}

#[derive(Debug, Default)]
pub struct StubState {
    answers: Mutex<HashMap<String, String>>,
    fallback: Mutex<String>,
    faults: Mutex<VecDeque<Fault>>,
    latency: Mutex<Duration>,
    required_token: Mutex<Option<String>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    requests: AtomicUsize,
}

impl StubState {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Registers the reply for requests whose first image has these bytes.
    pub fn answer_for_image(&self, png: &[u8], reply: impl Into<String>) {
        self.answers.lock().unwrap().insert(image_hash(png), reply.into());
    }

    /// Reply used when no image-specific answer matches.
    pub fn set_fallback(&self, reply: impl Into<String>) {
        *self.fallback.lock().unwrap() = reply.into();
    }

    pub fn push_fault(&self, fault: Fault) {
        self.faults.lock().unwrap().push_back(fault);
    }

    pub fn set_latency(&self, latency: Duration) {
        *self.latency.lock().unwrap() = latency;
    }

    /// Rejects requests without this bearer token with 401.
    pub fn require_token(&self, token: impl Into<String>) {
        *self.required_token.lock().unwrap() = Some(token.into());
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

struct InFlight<'a>(&'a StubState);

impl<'a> InFlight<'a> {
    fn enter(s: &'a StubState) -> Self {
        let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        s.max_in_flight.fetch_max(now, Ordering::SeqCst);
        Self(s)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

fn first_image(body: &Value) -> Option<Vec<u8>> {
    let parts = body.get("messages")?.get(0)?.get("content")?.as_array()?;
    let url = parts.iter().find_map(|p| p.get("image_url")?.get("url")?.as_str())?;
    STANDARD.decode(url.split_once(",")?.1).ok()
}

fn completion(text: &str) -> Response {
    Json(json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
    }))
    .into_response()
}

async fn chat(State(state): State<Arc<StubState>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    state.requests.fetch_add(1, Ordering::SeqCst);
    let _guard = InFlight::enter(&state);
    let required = state.required_token.lock().unwrap().clone();
    if let Some(token) = required {
        let expected = format!("Bearer {token}");
        if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some(expected.as_str()) {
            return StatusCode::UNAUTHORIZED.into_response();
        }
    }
    let fault = state.faults.lock().unwrap().pop_front();
    match fault {
        Some(Fault::Status(code)) => {
            let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return (status, "stub fault").into_response();
        }
        Some(Fault::RateLimited { retry_after_secs }) => {
            return (
                StatusCode::TOO_MANY_REQUESTS,
                [("retry-after", retry_after_secs.to_string())],
                "slow down",
            )
                .into_response();
        }
        Some(Fault::Malformed) => return (StatusCode::OK, "<html>not json</html>").into_response(),
        Some(Fault::Delay(d)) => tokio::time::sleep(d).await,
        None => {}
    }
    let latency = *state.latency.lock().unwrap();
    if !latency.is_zero() {
        tokio::time::sleep(latency).await;
    }
    let reply = first_image(&body)
        .and_then(|png| state.answers.lock().unwrap().get(&image_hash(&png)).cloned())
        .unwrap_or_else(|| state.fallback.lock().unwrap().clone());
    completion(&reply)
}

pub struct StubServer {
    pub addr: SocketAddr,
    pub state: Arc<StubState>,
    handle: JoinHandle<()>,
}

impl StubServer {
    /// Binds an ephemeral local port on the current runtime.
    pub async fn start(state: Arc<StubState>) -> std::io::Result<Self> {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let app = Router::new()
            .route("/v1/chat/completions", post(chat))
            .with_state(state.clone());
        let handle = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Self { addr, state, handle })
    }

    /// Base URL to put in a [`crate::ModelEndpoint`].
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.handle.abort();
    }
}
