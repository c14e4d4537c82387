//! Service configuration: a JSON file, overridden by command-line flags,
//! with the backend token also settable from the environment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use counsel_core::emotion::{
    EmotionError, LexiconClassifier, RemoteClassifier, SentimentClassifier, DEFAULT_SMOOTHING_WINDOW,
};
use counsel_core::matching::MatchConfig;
use counsel_core::session::{HttpBackend, HttpBackendConfig, MockBackend, ResponseBackend};
use serde::{Deserialize, Serialize};

pub const TOKEN_ENV: &str = "COUNSEL_BACKEND_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock,
    Http(HttpBackendConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    /// `positive.txt` and `negative.txt` in `dir`, or the bundled lexicon.
    Lexicon {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
    },
    Remote(RemoteClassifier),
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self::Lexicon { dir: None }
    }
}

impl ClassifierConfig {
    pub fn build(&self) -> Result<Arc<dyn SentimentClassifier>, EmotionError> {
        Ok(match self {
            Self::Lexicon { dir: Some(dir) } => Arc::new(LexiconClassifier::from_dir(dir)?),
            Self::Lexicon { dir: None } => Arc::new(LexiconClassifier::builtin()),
            Self::Remote(remote) => Arc::new(remote.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    pub kb_path: PathBuf,
    /// Reject unknown keys and empty prognosis or assessment fields.
    pub strict_kb: bool,
    pub matching: MatchConfig,
    pub backend: BackendConfig,
    pub classifier: ClassifierConfig,
    pub smoothing_window: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            kb_path: PathBuf::from("fixtures/kb.json"),
            strict_kb: true,
            matching: MatchConfig::default(),
            backend: BackendConfig::Mock,
            classifier: ClassifierConfig::default(),
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Applies the token environment variable, if set.
    pub fn apply_env(&mut self) {
        self.apply_token(std::env::var(TOKEN_ENV).ok());
    }

    pub fn apply_token(&mut self, token: Option<String>) {
        if let (BackendConfig::Http(http), Some(token)) = (&mut self.backend, token) {
            if !token.is_empty() {
                http.token = Some(token);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.matching
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        validate_window(self.smoothing_window)?;
        if let BackendConfig::Http(http) = &self.backend {
            if http.url.is_empty() || http.model.is_empty() {
                return Err(ConfigError::Invalid("http backend needs a url and a model".into()));
            }
            if http.timeout_ms == 0 {
                return Err(ConfigError::Invalid("backend timeout must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn build_backend(&self) -> Arc<dyn ResponseBackend> {
        match &self.backend {
            BackendConfig::Mock => Arc::new(MockBackend::new()),
            BackendConfig::Http(http) => Arc::new(HttpBackend::new(http.clone())),
        }
    }
}

pub fn validate_window(window: usize) -> Result<(), ConfigError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(ConfigError::Invalid(format!(
            "smoothing window must be a positive odd number, got {window}"
        )));
    }
    Ok(())
}
