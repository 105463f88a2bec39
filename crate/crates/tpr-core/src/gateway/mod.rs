//! Uniform access to the three model roles (reference, labeler, embedder)
//! over an OpenAI-compatible wire protocol or a deterministic mock backend,
//! with caching, retries, and per-backend concurrency bounds.

mod cache;
pub mod canonical;
mod limiter;
pub mod mock;
pub mod openai;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use cache::ResponseCache;
pub use canonical::{BackendIdentity, GatewayRequest, GatewayValue, OpKind};
use limiter::Semaphore;
pub use mock::MockBackend;
pub use openai::{OpenAiBackend, API_TOKEN_ENV, TOP_LOGPROBS};

/// Probability floor applied when a yes/no token is absent from the top list.
pub const PROB_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reference,
    Labeler,
    Embedder,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Reference => "reference",
            Role::Labeler => "labeler",
            Role::Embedder => "embedder",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    OpenaiCompatible,
    Mock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub role: Role,
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    pub model_name: String,
    #[serde(default)]
    pub fixture_path: Option<PathBuf>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
}

fn default_max_retries() -> u32 {
    2
}
fn default_timeout() -> f64 {
    60.0
}
fn default_concurrency() -> usize {
    4
}

impl BackendConfig {
    pub fn mock(role: Role, model_name: &str, fixture_path: PathBuf) -> Self {
        BackendConfig {
            role,
            kind: BackendKind::Mock,
            base_url: None,
            model_name: model_name.to_string(),
            fixture_path: Some(fixture_path),
            max_retries: default_max_retries(),
            request_timeout_secs: default_timeout(),
            concurrency_limit: default_concurrency(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BackendKind::OpenaiCompatible => {
                if self.base_url.is_none() || self.fixture_path.is_some() {
                    return Err(Error::InvalidConfig(format!(
                        "{} backend: openai_compatible requires base_url and no fixture_path",
                        self.role.as_str()
                    )));
                }
            }
            BackendKind::Mock => {
                if self.fixture_path.is_none() || self.base_url.is_some() {
                    return Err(Error::InvalidConfig(format!(
                        "{} backend: mock requires fixture_path and no base_url",
                        self.role.as_str()
                    )));
                }
            }
        }
        if !(self.request_timeout_secs > 0.0) {
            return Err(Error::InvalidConfig("request_timeout_secs must be > 0".into()));
        }
        if self.concurrency_limit < 1 {
            return Err(Error::InvalidConfig("concurrency_limit must be >= 1".into()));
        }
        Ok(())
    }

    /// Cache/fixture identity; excludes role and operational knobs.
    pub fn identity(&self) -> BackendIdentity {
        let (kind, endpoint) = match self.kind {
            BackendKind::OpenaiCompatible => (
                "openai_compatible",
                self.base_url.clone().unwrap_or_default(),
            ),
            BackendKind::Mock => (
                "mock",
                self.fixture_path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
        };
        BackendIdentity {
            kind: kind.to_string(),
            endpoint,
            model: self.model_name.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default)]
    pub image: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Purpose tag for deterministic mock sampling; also disambiguates
    /// otherwise-identical requests so retries and fixtures can be scripted.
    pub seed_tag: String,
}

impl ChatExchange {
    /// Single user message, optionally with one image.
    pub fn user(text: &str, image: Option<&str>, temperature: f64, max_tokens: u32, seed_tag: &str) -> Self {
        ChatExchange {
            messages: vec![ChatMessage {
                speaker: Speaker::User,
                text: text.to_string(),
                image: image.map(str::to_string),
            }],
            temperature,
            max_tokens,
            seed_tag: seed_tag.to_string(),
        }
    }

    pub fn image(&self) -> Option<&str> {
        self.messages.iter().find_map(|m| m.image.as_deref())
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::InvalidParams("exchange has no messages".into()));
        }
        let image_count = self.messages.iter().filter(|m| m.image.is_some()).count();
        if image_count > 1 {
            return Err(Error::InvalidParams("at most one image per exchange".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::InvalidParams(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens < 1 {
            return Err(Error::InvalidParams("max_tokens must be >= 1".into()));
        }
        if self.seed_tag.is_empty() {
            return Err(Error::InvalidParams("seed_tag must be non-empty".into()));
        }
        Ok(())
    }
}

/// Yes/no probability mass extracted from a single-token generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenProbResult {
    pub p_yes: f64,
    pub p_no: f64,
    pub raw_top_tokens: Vec<(String, f64)>,
}

impl TokenProbResult {
    /// Sums the probability of tokens whose trimmed, lowercased form is
    /// "yes"/"no". Floors at [`PROB_FLOOR`], caps at 1, and scales both sides
    /// down only when malformed inputs would push `p_yes + p_no` past 1.
    pub fn from_top_tokens(raw_top_tokens: Vec<(String, f64)>) -> Self {
        let mut p_yes = 0.0f64;
        let mut p_no = 0.0f64;
        for (token, p) in &raw_top_tokens {
            let folded = token.trim().to_lowercase();
            let folded = folded.trim_matches(|c: char| !c.is_alphanumeric());
            let p = p.max(0.0);
            if folded == "yes" {
                p_yes += p;
            } else if folded == "no" {
                p_no += p;
            }
        }
        p_yes = p_yes.clamp(PROB_FLOOR, 1.0);
        p_no = p_no.clamp(PROB_FLOOR, 1.0);
        let sum = p_yes + p_no;
        if sum > 1.0 {
            p_yes /= sum;
            p_no /= sum;
            p_yes = p_yes.clamp(PROB_FLOOR, 1.0);
            p_no = p_no.clamp(PROB_FLOOR, 1.0);
        }
        TokenProbResult {
            p_yes,
            p_no,
            raw_top_tokens,
        }
    }

    pub fn score(&self) -> f64 {
        self.p_yes - self.p_no
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dimension: usize,
    pub normalized: bool,
}

impl EmbeddingVector {
    /// Scale to unit Euclidean norm. Zero, empty, or non-finite input is a
    /// backend defect.
    pub fn normalized_from(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() || raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedResponse("embedding empty or non-finite".into()));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::MalformedResponse("zero-norm embedding".into()));
        }
        let values: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let dimension = values.len();
        Ok(EmbeddingVector {
            values,
            dimension,
            normalized: true,
        })
    }

    pub fn raw(values: Vec<f64>) -> Self {
        let dimension = values.len();
        EmbeddingVector {
            values,
            dimension,
            normalized: false,
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A backend services wire-independent requests. Implementations must be
/// shareable across worker threads.
pub trait Backend: Send + Sync {
    fn invoke(&self, req: &GatewayRequest, canonical_hash: &str) -> Result<GatewayValue>;
}

/// One configured backend with caching, retry, and concurrency enforcement.
/// Shareable across pipeline workers (`Arc<Gateway>`).
pub struct Gateway {
    config: BackendConfig,
    roles: Vec<Role>,
    identity: BackendIdentity,
    backend: Arc<dyn Backend>,
    cache: ResponseCache,
    limiter: Semaphore,
    text_dim: Mutex<Option<usize>>,
    backend_calls: AtomicU64,
}

impl Gateway {
    pub fn new(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let backend: Arc<dyn Backend> = match config.kind {
            BackendKind::Mock => Arc::new(MockBackend::load(
                config.fixture_path.as_ref().expect("validated"),
            )?),
            BackendKind::OpenaiCompatible => Arc::new(OpenAiBackend::new(
                config.base_url.as_ref().expect("validated"),
                &config.model_name,
                config.request_timeout_secs,
            )?),
        };
        Ok(Self::assemble(config, backend))
    }

    /// Wire in an externally constructed backend (tests keep their own handle
    /// for instrumentation).
    pub fn with_backend(config: BackendConfig, backend: Arc<dyn Backend>) -> Result<Self> {
        if !(config.request_timeout_secs > 0.0) || config.concurrency_limit < 1 {
            return Err(Error::InvalidConfig("invalid timeout or concurrency".into()));
        }
        Ok(Self::assemble(config, backend))
    }

    fn assemble(config: BackendConfig, backend: Arc<dyn Backend>) -> Self {
        let identity = config.identity();
        let limiter = Semaphore::new(config.concurrency_limit);
        let roles = vec![config.role];
        Gateway {
            config,
            roles,
            identity,
            backend,
            cache: ResponseCache::new(None),
            limiter,
            text_dim: Mutex::new(None),
            backend_calls: AtomicU64::new(0),
        }
    }

    /// Enable the content-addressed on-disk cache under `dir`.
    pub fn with_cache_dir(mut self, dir: PathBuf) -> Self {
        self.cache = ResponseCache::new(Some(dir));
        self
    }

    /// Additional role this gateway serves (backend aliasing, e.g.
    /// self-labeling where the labeler is the reference model).
    pub fn add_role(&mut self, role: Role) {
        if !self.roles.contains(&role) {
            self.roles.push(role);
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn identity(&self) -> &BackendIdentity {
        &self.identity
    }

    /// Number of actual backend invocations (cache hits excluded).
    pub fn backend_call_count(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    fn require_role(&self, allowed: &[Role], operation: &str) -> Result<()> {
        if self.roles.iter().any(|r| allowed.contains(r)) {
            return Ok(());
        }
        Err(Error::RoleMismatch {
            role: self
                .roles
                .iter()
                .map(|r| r.as_str())
                .collect::<Vec<_>>()
                .join("+"),
            operation: operation.to_string(),
        })
    }

    /// Full assistant text for `exchange`. Blank assistant text participates
    /// in the retry budget and surfaces as [`Error::EmptyResponse`].
    pub fn chat_complete(&self, exchange: &ChatExchange) -> Result<String> {
        self.require_role(&[Role::Reference, Role::Labeler], "chat_complete")?;
        exchange.validate()?;
        let value = self.execute(GatewayRequest::Chat(exchange.clone()))?;
        match value {
            GatewayValue::Text(text) => Ok(text),
            other => Err(Error::MalformedResponse(format!(
                "expected text, got {other:?}"
            ))),
        }
    }

    /// Yes/no probabilities for a yes-no question about `image`, from the
    /// first-token distribution with top-20 alternatives.
    pub fn yes_no_probabilities(&self, image: &str, question: &str) -> Result<TokenProbResult> {
        self.require_role(&[Role::Labeler], "yes_no_probabilities")?;
        let value = self.execute(GatewayRequest::Probs {
            image: image.to_string(),
            question: question.to_string(),
        })?;
        match value {
            GatewayValue::TopTokens(tokens) => Ok(TokenProbResult::from_top_tokens(tokens)),
            other => Err(Error::MalformedResponse(format!(
                "expected token probabilities, got {other:?}"
            ))),
        }
    }

    /// Unit-norm pooled text embedding; dimension must be stable within a run.
    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        self.require_role(&[Role::Embedder], "embed_text")?;
        if text.is_empty() {
            return Err(Error::InvalidParams("embed_text requires non-empty text".into()));
        }
        let value = self.execute(GatewayRequest::EmbedText {
            text: text.to_string(),
        })?;
        let raw = match value {
            GatewayValue::Vector(v) => v,
            other => {
                return Err(Error::MalformedResponse(format!(
                    "expected vector, got {other:?}"
                )))
            }
        };
        let mut dim = self.text_dim.lock().unwrap();
        if let Some(expected) = *dim {
            if expected != raw.len() {
                return Err(Error::DimensionMismatch {
                    expected,
                    got: raw.len(),
                });
            }
        } else {
            *dim = Some(raw.len());
        }
        EmbeddingVector::normalized_from(raw)
    }

    /// Per-vision-token embeddings for `image`, all of equal dimension.
    pub fn embed_image_tokens(&self, image: &str) -> Result<Vec<EmbeddingVector>> {
        self.require_role(&[Role::Embedder], "embed_image_tokens")?;
        let value = self.execute(GatewayRequest::EmbedImage {
            image: image.to_string(),
        })?;
        let vectors = match value {
            GatewayValue::TokenVectors(vs) => vs,
            other => {
                return Err(Error::MalformedResponse(format!(
                    "expected token vectors, got {other:?}"
                )))
            }
        };
        if vectors.is_empty() {
            return Err(Error::EmptyTokenList);
        }
        let dim = vectors[0].len();
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        Ok(vectors.into_iter().map(EmbeddingVector::raw).collect())
    }

    fn execute(&self, req: GatewayRequest) -> Result<GatewayValue> {
        let hash = req.canonical_hash(&self.identity);
        if let Some(hit) = self.cache.get(&hash)? {
            return Ok(hit);
        }
        let _permit = self.limiter.acquire();
        // another worker may have filled the entry while we waited
        if let Some(hit) = self.cache.get(&hash)? {
            return Ok(hit);
        }
        let mut attempt: u32 = 0;
        loop {
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            let outcome = match self.backend.invoke(&req, &hash) {
                Ok(GatewayValue::Text(text)) if text.trim().is_empty() => {
                    Err(Error::EmptyResponse)
                }
                other => other,
            };
            match outcome {
                Ok(value) => {
                    self.cache.put(&hash, &value)?;
                    return Ok(value);
                }
                Err(e) if attempt < self.config.max_retries
                    && (e.is_retryable() || matches!(e, Error::EmptyResponse)) =>
                {
                    std::thread::sleep(self.backoff_delay(attempt, &hash));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Exponential backoff with jitter drawn from a stream keyed by the
    /// request hash, so retry timing is reproducible.
    fn backoff_delay(&self, attempt: u32, hash: &str) -> Duration {
        let base_ms: u64 = match self.config.kind {
            BackendKind::Mock => 1,
            BackendKind::OpenaiCompatible => 100,
        };
        let mut stream = SeedStream::new(0, hash, "retry");
        let jitter = stream.next_u64() % base_ms.max(1);
        Duration::from_millis(base_ms.saturating_mul(1 << attempt.min(8)) + jitter)
    }
}
