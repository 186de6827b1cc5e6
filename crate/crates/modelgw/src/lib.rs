//! Model gateway: prompt construction, a chat-completions client with retries,
//! an on-disk response cache and a bounded-parallel benchmark runner.

pub mod cache;
pub mod client;
pub mod endpoint;
pub mod prompts;
pub mod runner;
#[cfg(feature = "stub")]
pub mod stub;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::DiskCache;
pub use client::{Client, QueryRecord, QueryRequest};
pub use endpoint::ModelEndpoint;
pub use prompts::{build_prompt, PromptMode, Subject};
pub use runner::{grid_items, run_benchmark, sequence_items, BenchItem, FailureLine, RunOptions, RunSummary};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint rejected credentials (HTTP {status})")]
    AuthFailure { status: u16 },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("prompt mode {0} does not fit this stimulus")]
    ModeMismatch(PromptMode),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("{failed} of {total} queries failed")]
    PartialFailure { failed: usize, total: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

impl GatewayError {
    /// Whether a later attempt could succeed without changing anything.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            GatewayError::RateLimited { .. } | GatewayError::Timeout { .. } | GatewayError::TransportError(_)
        )
    }
}

pub(crate) fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Hex digest of a prompt string.
pub fn prompt_hash(prompt: &str) -> String {
    sha256_hex(&[prompt.as_bytes()])
}

/// Hex digest of image bytes, as reported in query records.
pub fn image_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
