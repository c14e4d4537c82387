//! Response backends.
//!
//! A backend receives a rendered prompt and returns the agent's reply.
//! [`MockBackend`] is deterministic and offline; [`HttpBackend`] speaks a
//! chat-completion style JSON protocol.

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::client_block;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendReply {
    pub text: String,
    pub latency_ms: u64,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendErrorKind {
    Timeout,
    Status(u16),
    Transport(String),
    MalformedResponse(String),
    EmptyReply,
}

impl fmt::Display for BackendErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Timeout => f.write_str("request timed out"),
            Self::Status(code) => write!(f, "endpoint returned HTTP {code}"),
            Self::Transport(msg) => write!(f, "transport error: {msg}"),
            Self::MalformedResponse(msg) => write!(f, "malformed response: {msg}"),
            Self::EmptyReply => f.write_str("empty reply"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("backend `{backend_id}`: {kind}")]
pub struct BackendError {
    pub backend_id: String,
    pub kind: BackendErrorKind,
}

impl BackendError {
    pub fn new(backend_id: impl Into<String>, kind: BackendErrorKind) -> Self {
        Self {
            backend_id: backend_id.into(),
            kind,
        }
    }
}

/// Produces agent replies. Implementations must tolerate concurrent calls.
pub trait ResponseBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, prompt: &str) -> Result<BackendReply, BackendError>;
}

const MOCK_TEMPLATES: [&str; 4] = [
    "Thank you for sharing that. Could you tell me more about how it has been affecting your days?",
    "I hear you. When did you first notice feeling this way?",
    "That sounds difficult. What helps you most when it gets hard?",
    "I appreciate your openness. How have your sleep and energy been lately?",
];

const ECHO_CHARS: usize = 20;

/// Deterministic offline backend. The reply template is chosen by a hash of
/// the prompt, and the reply echoes the first 20 characters of the client
/// block.
#[derive(Debug, Clone, Default)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        Self
    }

    pub fn reply_for(prompt: &str) -> String {
        let digest = Sha256::digest(prompt.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        let template = MOCK_TEMPLATES[(u64::from_be_bytes(head) % MOCK_TEMPLATES.len() as u64) as usize];
        let echo: String = client_block(prompt)
            .unwrap_or(prompt)
            .chars()
            .take(ECHO_CHARS)
            .collect();
        format!("{template} (you said: \"{echo}\")")
    }
}

impl ResponseBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str) -> Result<BackendReply, BackendError> {
        Ok(BackendReply {
            text: Self::reply_for(prompt),
            latency_ms: 0,
            backend_id: self.id().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub url: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}

/// Chat-completion client: the rendered prompt is sent as the single user
/// message and the reply is read from `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: HttpBackendConfig,
    id: String,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let id = format!("http:{}", config.model);
        Self { config, id }
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    fn error(&self, kind: BackendErrorKind) -> BackendError {
        BackendError::new(&self.id, kind)
    }
}

impl ResponseBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str) -> Result<BackendReply, BackendError> {
        let started = Instant::now();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(self.config.timeout_ms))
            .build()
            .map_err(|e| self.error(BackendErrorKind::Transport(e.to_string())))?;

        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut request = client.post(&self.config.url).json(&body);
        if let Some(token) = &self.config.token {
            request = request.bearer_auth(token);
        }

        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                self.error(BackendErrorKind::Timeout)
            } else {
                self.error(BackendErrorKind::Transport(e.to_string()))
            }
        };
        let response = request.send().map_err(classify)?;
        let status = response.status();
        if !status.is_success() {
            return Err(self.error(BackendErrorKind::Status(status.as_u16())));
        }
        let json: serde_json::Value = response.json().map_err(|e| {
            if e.is_timeout() {
                self.error(BackendErrorKind::Timeout)
            } else {
                self.error(BackendErrorKind::MalformedResponse(e.to_string()))
            }
        })?;
        let text = json["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| self.error(BackendErrorKind::MalformedResponse("missing choices[0].message.content".into())))?;
        if text.trim().is_empty() {
            return Err(self.error(BackendErrorKind::EmptyReply));
        }
        Ok(BackendReply {
            text: text.to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
            backend_id: self.id.clone(),
        })
    }
}
