//! Chat-completion backends, prompt templates and the default embedder.

mod backend;
mod embed;
mod fixture;
mod template;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{HttpBackend, StubBackend, StubRule};
pub use embed::{cosine, EmbeddingProvider, HashingEmbedder, EMBED_DIM};
pub use fixture::{fixture_key, FixtureStore, RecordingBackend, ReplayBackend};
pub use template::{render_text, TemplateSet, TEMPLATE_IDS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no recorded reply for fixture key {key} (template {template_id})")]
    FixtureMiss { key: String, template_id: String },
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
    #[error("unbound placeholder '{0}'")]
    UnboundPlaceholder(String),
    #[error("rendered prompt is empty")]
    EmptyPrompt,
    #[error("cannot embed empty text")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub template_id: String,
    pub rendered_prompt: String,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(template_id: impl Into<String>, rendered_prompt: impl Into<String>) -> Self {
        Self {
            template_id: template_id.into(),
            rendered_prompt: rendered_prompt.into(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatReply {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

/// A chat-completion backend. Implementations must tolerate concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, LlmError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, LlmError> {
        (**self).complete(req)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, LlmError> {
        (**self).complete(req)
    }
}

/// One prompt/reply pair as seen by a pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub template_id: String,
    pub prompt: String,
    pub reply: String,
}

/// Wraps a backend and keeps every exchange in call order.
pub struct TranscriptBackend<B> {
    inner: B,
    log: Mutex<Vec<Exchange>>,
}

impl<B: ChatBackend> TranscriptBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn take(&self) -> Vec<Exchange> {
        std::mem::take(&mut *self.log.lock().unwrap())
    }
}

impl<B: ChatBackend> ChatBackend for TranscriptBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, LlmError> {
        let reply = self.inner.complete(req)?;
        self.log.lock().unwrap().push(Exchange {
            template_id: req.template_id.clone(),
            prompt: req.rendered_prompt.clone(),
            reply: reply.text.clone(),
        });
        Ok(reply)
    }
}

/// Renders a named template and sends it to the backend.
#[derive(Clone, Copy)]
pub struct Prompter<'a> {
    pub backend: &'a dyn ChatBackend,
    pub templates: &'a TemplateSet,
}

impl<'a> Prompter<'a> {
    pub fn new(backend: &'a dyn ChatBackend, templates: &'a TemplateSet) -> Self {
        Self { backend, templates }
    }

    pub fn ask(&self, template_id: &str, bindings: &BTreeMap<&str, String>) -> Result<String, LlmError> {
        let prompt = self.templates.render(template_id, bindings)?;
        if prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let req = ChatRequest::new(template_id, prompt);
        tracing::debug!(template_id, "llm call");
        Ok(self.backend.complete(&req)?.text)
    }
}

/// Builds bindings from `(name, value)` pairs.
pub fn bindings<const N: usize>(pairs: [(&'static str, String); N]) -> BTreeMap<&'static str, String> {
    pairs.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmMode {
    Http,
    Replay,
    Record,
}

/// Backend selection read from `DIAL_LLM_*` variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmSettings {
    pub mode: LlmMode,
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub fixtures_dir: Option<PathBuf>,
}

impl LlmSettings {
    pub fn from_env() -> Result<Self, LlmError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let mode = match var("DIAL_LLM_MODE").as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("replay") => LlmMode::Replay,
            Some("http") => LlmMode::Http,
            Some("record") => LlmMode::Record,
            Some(other) => {
                return Err(LlmError::BackendUnavailable(format!("unknown DIAL_LLM_MODE '{other}'")))
            }
        };
        Ok(Self {
            mode,
            endpoint: var("DIAL_LLM_ENDPOINT"),
            api_key: var("DIAL_LLM_API_KEY"),
            model: var("DIAL_LLM_MODEL"),
            fixtures_dir: var("DIAL_FIXTURES_DIR").map(PathBuf::from),
        })
    }

    pub fn build(&self) -> Result<Arc<dyn ChatBackend>, LlmError> {
        let fixtures = || {
            self.fixtures_dir
                .clone()
                .ok_or_else(|| LlmError::BackendUnavailable("no fixture directory configured".into()))
        };
        let http = || {
            let endpoint = self
                .endpoint
                .clone()
                .ok_or_else(|| LlmError::BackendUnavailable("DIAL_LLM_ENDPOINT not set".into()))?;
            Ok::<_, LlmError>(HttpBackend::new(
                endpoint,
                self.api_key.clone(),
                self.model.clone().unwrap_or_else(|| "default".into()),
            ))
        };
        Ok(match self.mode {
            LlmMode::Replay => Arc::new(ReplayBackend::new(FixtureStore::open(fixtures()?))),
            LlmMode::Http => Arc::new(http()?),
            LlmMode::Record => Arc::new(RecordingBackend::new(http()?, FixtureStore::open(fixtures()?))),
        })
    }
}
