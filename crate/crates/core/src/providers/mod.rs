//! Contracts for the three external model capabilities plus the mock and HTTP
//! implementations.
//!
//! Every provider is `Send + Sync`; the pipeline calls them from worker threads.

pub mod http;
pub mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ProviderError;

pub use http::{HttpConfig, HttpProvider};
pub use mock::{MockChat, MockEmbedder, MockScorer, ScriptedChat};

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 16_394;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_tokens == 0 {
            return Err(ProviderError::Input("max_tokens must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ProviderError::Input(format!(
                "temperature {} must be finite and non-negative",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

/// Sum of continuation token log-probabilities and the continuation length in
/// the scorer's own tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodResult {
    pub sum_logprob: f64,
    pub token_count: u32,
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

pub trait Embedder: Send + Sync {
    /// Returns one unit-norm vector per input text.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

pub trait LikelihoodScorer: Send + Sync {
    /// Scores `continuation` given `condition`. An empty condition means no
    /// conditioning context.
    fn score_likelihood(
        &self,
        condition: &str,
        continuation: &str,
    ) -> Result<LikelihoodResult, ProviderError>;
}

/// Cosine similarity. Bit-identical inputs return exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a == b && a.iter().any(|x| *x != 0.0) {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub(crate) fn l2_normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// Call and token counters shared by a [`Providers`] bundle.
#[derive(Debug, Default)]
pub struct UsageMeter {
    chat_calls: AtomicU64,
    embed_calls: AtomicU64,
    likelihood_calls: AtomicU64,
    tokens: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSnapshot {
    pub chat_calls: u64,
    pub embed_calls: u64,
    pub likelihood_calls: u64,
    pub tokens: u64,
}

impl UsageSnapshot {
    pub fn since(&self, earlier: &UsageSnapshot) -> UsageSnapshot {
        UsageSnapshot {
            chat_calls: self.chat_calls - earlier.chat_calls,
            embed_calls: self.embed_calls - earlier.embed_calls,
            likelihood_calls: self.likelihood_calls - earlier.likelihood_calls,
            tokens: self.tokens - earlier.tokens,
        }
    }
}

impl UsageMeter {
    pub fn snapshot(&self) -> UsageSnapshot {
        UsageSnapshot {
            chat_calls: self.chat_calls.load(Ordering::SeqCst),
            embed_calls: self.embed_calls.load(Ordering::SeqCst),
            likelihood_calls: self.likelihood_calls.load(Ordering::SeqCst),
            tokens: self.tokens.load(Ordering::SeqCst),
        }
    }
}

/// The three capabilities bundled with a usage meter.
///
/// Token accounting covers chat prompt and completion tokens plus the scored
/// continuation tokens of likelihood calls. Embedding calls are counted but
/// carry no token cost.
#[derive(Clone)]
pub struct Providers {
    chat: Arc<dyn ChatModel>,
    embedder: Arc<dyn Embedder>,
    scorer: Arc<dyn LikelihoodScorer>,
    usage: Arc<UsageMeter>,
}

impl Providers {
    pub fn new(
        chat: Arc<dyn ChatModel>,
        embedder: Arc<dyn Embedder>,
        scorer: Arc<dyn LikelihoodScorer>,
    ) -> Self {
        Self {
            chat,
            embedder,
            scorer,
            usage: Arc::new(UsageMeter::default()),
        }
    }

    /// Same providers, fresh counters.
    pub fn with_fresh_meter(&self) -> Self {
        Self {
            usage: Arc::new(UsageMeter::default()),
            ..self.clone()
        }
    }

    pub fn with_scorer(&self, scorer: Arc<dyn LikelihoodScorer>) -> Self {
        Self {
            scorer,
            ..self.clone()
        }
    }

    pub fn with_chat(&self, chat: Arc<dyn ChatModel>) -> Self {
        Self {
            chat,
            ..self.clone()
        }
    }

    pub fn usage(&self) -> UsageSnapshot {
        self.usage.snapshot()
    }

    pub fn scorer(&self) -> &Arc<dyn LikelihoodScorer> {
        &self.scorer
    }
}

impl ChatModel for Providers {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let resp = self.chat.complete(request)?;
        self.usage.chat_calls.fetch_add(1, Ordering::SeqCst);
        self.usage
            .tokens
            .fetch_add(resp.tokens_in + resp.tokens_out, Ordering::SeqCst);
        Ok(resp)
    }
}

impl Embedder for Providers {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let out = self.embedder.embed(texts)?;
        self.usage.embed_calls.fetch_add(1, Ordering::SeqCst);
        Ok(out)
    }
}

impl LikelihoodScorer for Providers {
    fn score_likelihood(
        &self,
        condition: &str,
        continuation: &str,
    ) -> Result<LikelihoodResult, ProviderError> {
        let res = self.scorer.score_likelihood(condition, continuation)?;
        self.usage.likelihood_calls.fetch_add(1, Ordering::SeqCst);
        self.usage
            .tokens
            .fetch_add(u64::from(res.token_count), Ordering::SeqCst);
        Ok(res)
    }
}
