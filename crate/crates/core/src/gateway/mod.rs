//! Uniform access to language-model backends.
//!
//! A [`Gateway`] owns a set of named backends, caps in-flight requests per
//! backend, and logs every rendered prompt so tests can audit what each model
//! was shown.

mod http;
mod mock;
pub mod tags;
pub mod template;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

pub use http::HttpBackend;
pub use mock::{MockBackend, MockScript, Reply};
pub use tags::{parse_rating, parse_tagged, TagError};
pub use template::{PromptTemplate, TemplateError, TemplateSet};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend `{backend}`: script exhausted at call {ordinal}{}", session.as_ref().map(|s| format!(" (session {s})")).unwrap_or_default())]
    ScriptExhausted {
        backend: String,
        session: Option<String>,
        ordinal: usize,
    },
    #[error("backend `{backend}` failed: {message}")]
    Backend { backend: String, message: String },
    #[error("backend `{backend}` rate limited after {attempts} attempt(s)")]
    RateLimited { backend: String, attempts: u32 },
    #[error("backend `{backend}` returned HTTP {status} after {attempts} attempt(s)")]
    Http {
        backend: String,
        status: u16,
        attempts: u32,
    },
    #[error("backend `{backend}` transport error after {attempts} attempt(s): {message}")]
    Transport {
        backend: String,
        message: String,
        attempts: u32,
    },
    #[error("backend `{backend}` returned an undecodable response: {message}")]
    Decode { backend: String, message: String },
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn is_rate_limited(&self) -> bool {
        matches!(self, GatewayError::RateLimited { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub backend_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    /// Scopes mock-script ordinals; ignored by HTTP backends.
    pub session: Option<String>,
}

impl CompletionRequest {
    pub fn new(backend_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        CompletionRequest {
            backend_id: backend_id.into(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: 4096,
            seed: None,
            session: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_session(mut self, session: impl Into<String>) -> Self {
        self.session = Some(session.into());
        self
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} must be finite and non-negative",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// A language-model backend with a blocking request/response contract.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_base_ms: 500,
        }
    }
}

fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub id: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Reply script for mock backends, relative to the config file.
    #[serde(default)]
    pub script: Option<PathBuf>,
}

impl BackendConfig {
    pub fn mock(id: impl Into<String>) -> Self {
        BackendConfig {
            id: id.into(),
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: String::new(),
            auth_env_var: None,
            max_in_flight: default_in_flight(),
            retry: RetryPolicy::default(),
            script: None,
        }
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        if self.id.trim().is_empty() {
            return Err(GatewayError::Config("backend id must not be empty".into()));
        }
        if self.kind == BackendKind::Http && self.endpoint.as_deref().unwrap_or("").is_empty() {
            return Err(GatewayError::Config(format!(
                "http backend `{}` requires an endpoint",
                self.id
            )));
        }
        if self.max_in_flight < 1 {
            return Err(GatewayError::Config(format!(
                "backend `{}`: max_in_flight must be >= 1",
                self.id
            )));
        }
        Ok(())
    }
}

/// One logged backend call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLogEntry {
    pub backend_id: String,
    pub session: Option<String>,
    pub prompt: String,
}

struct Limiter {
    max: usize,
    state: Mutex<(usize, usize)>, // (in flight, peak)
    freed: Condvar,
}

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter {
            max,
            state: Mutex::new((0, 0)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().unwrap();
        while state.0 >= self.max {
            state = self.freed.wait(state).unwrap();
        }
        state.0 += 1;
        state.1 = state.1.max(state.0);
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        self.0.state.lock().unwrap().0 -= 1;
        self.0.freed.notify_one();
    }
}

struct Slot {
    backend: Box<dyn Backend>,
    limiter: Limiter,
}

/// Shared entry point for all model calls.
pub struct Gateway {
    backends: BTreeMap<String, Slot>,
    templates: TemplateSet,
    log: Mutex<Vec<PromptLogEntry>>,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Gateway {
            backends: BTreeMap::new(),
            templates: TemplateSet::builtin(),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn register(&mut self, id: impl Into<String>, backend: impl Backend + 'static, max_in_flight: usize) {
        self.backends.insert(
            id.into(),
            Slot {
                backend: Box::new(backend),
                limiter: Limiter::new(max_in_flight.max(1)),
            },
        );
    }

    /// Convenience for tests: registers a mock backend.
    pub fn with_mock(mut self, id: &str, script: MockScript) -> Self {
        self.register(id, MockBackend::new(id, script), default_in_flight());
        self
    }

    /// Builds backends from configuration; mock scripts resolve against `base_dir`.
    pub fn from_configs(configs: &[BackendConfig], base_dir: &Path) -> Result<Self, GatewayError> {
        let mut gateway = Gateway::new();
        for config in configs {
            config.check()?;
            match config.kind {
                BackendKind::Mock => {
                    let script = match &config.script {
                        Some(path) => MockScript::load(&base_dir.join(path))?,
                        None => MockScript::default(),
                    };
                    gateway.register(&config.id, MockBackend::new(&config.id, script), config.max_in_flight);
                }
                BackendKind::Http => {
                    let backend = HttpBackend::new(
                        &config.id,
                        config.endpoint.clone().unwrap_or_default(),
                        &config.model_name,
                        config.auth_env_var.clone(),
                        config.retry,
                    );
                    gateway.register(&config.id, backend, config.max_in_flight);
                }
            }
        }
        Ok(gateway)
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn has_backend(&self, id: &str) -> bool {
        self.backends.contains_key(id)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        request.check()?;
        let slot = self
            .backends
            .get(&request.backend_id)
            .ok_or_else(|| GatewayError::UnknownBackend(request.backend_id.clone()))?;
        let _permit = slot.limiter.acquire();
        self.log.lock().unwrap().push(PromptLogEntry {
            backend_id: request.backend_id.clone(),
            session: request.session.clone(),
            prompt: request.prompt.clone(),
        });
        slot.backend.complete(request)
    }

    pub fn prompt_log(&self) -> Vec<PromptLogEntry> {
        self.log.lock().unwrap().clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().unwrap().clear();
    }

    /// Highest number of simultaneous requests observed on a backend.
    pub fn peak_in_flight(&self, id: &str) -> Option<usize> {
        self.backends.get(id).map(|s| s.limiter.state.lock().unwrap().1)
    }
}
