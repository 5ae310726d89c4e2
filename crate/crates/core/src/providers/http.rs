//! Adapter for OpenAI-compatible HTTP endpoints.
//!
//! * `complete` posts to a chat-completions endpoint:
//!   `{"model", "messages": [{"role": "system", "content"}, {"role": "user", "content"}], "temperature", "max_tokens"}`
//!   and reads `choices[0].message.content` and `usage.{prompt_tokens, completion_tokens}`.
//! * `embed` posts `{"model", "input": [texts]}` to an embeddings endpoint and
//!   reads `data[i].embedding`, re-normalizing each vector.
//! * `score_likelihood` posts to a legacy completions endpoint with
//!   `{"model", "prompt": condition + continuation, "max_tokens": 0, "echo": true, "logprobs": 1, "temperature": 0}`
//!   and sums `choices[0].logprobs.token_logprobs` over tokens whose
//!   `text_offset` falls inside the continuation. The prompt is raw text with no
//!   chat template.
//!
//! Transport failures (connection errors, 429, 5xx) are retried three times
//! with exponential backoff.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use crate::error::ProviderError;

use super::{l2_normalize, ChatModel, ChatRequest, ChatResponse, Embedder, LikelihoodResult, LikelihoodScorer};

pub const ENV_CHAT_URL: &str = "SKILLFORGE_CHAT_URL";
pub const ENV_EMBED_URL: &str = "SKILLFORGE_EMBED_URL";
pub const ENV_LOGPROB_URL: &str = "SKILLFORGE_LOGPROB_URL";
pub const ENV_API_KEY: &str = "SKILLFORGE_API_KEY";
pub const ENV_CHAT_MODEL: &str = "SKILLFORGE_CHAT_MODEL";
pub const ENV_EMBED_MODEL: &str = "SKILLFORGE_EMBED_MODEL";
pub const ENV_SCORE_MODEL: &str = "SKILLFORGE_SCORE_MODEL";

static NETWORK_REQUESTS: AtomicU64 = AtomicU64::new(0);

/// Number of HTTP requests attempted by any adapter in this process.
pub fn network_request_count() -> u64 {
    NETWORK_REQUESTS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HttpConfig {
    pub chat_url: Option<String>,
    pub embed_url: Option<String>,
    pub logprob_url: Option<String>,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub chat_model: String,
    #[serde(default)]
    pub embed_model: String,
    #[serde(default)]
    pub score_model: String,
}

impl HttpConfig {
    /// Reads endpoint URLs, key and model names from the environment.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Self {
            chat_url: var(ENV_CHAT_URL),
            embed_url: var(ENV_EMBED_URL),
            logprob_url: var(ENV_LOGPROB_URL),
            api_key: var(ENV_API_KEY),
            chat_model: var(ENV_CHAT_MODEL).unwrap_or_default(),
            embed_model: var(ENV_EMBED_MODEL).unwrap_or_default(),
            score_model: var(ENV_SCORE_MODEL).unwrap_or_default(),
        }
    }
}

pub struct HttpProvider {
    config: HttpConfig,
    agent: ureq::Agent,
    retries: u32,
    backoff: Duration,
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(600)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            retries: 3,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn chat_body(&self, request: &ChatRequest) -> Value {
        json!({
            "model": self.config.chat_model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }

    pub fn embed_body(&self, texts: &[String]) -> Value {
        json!({"model": self.config.embed_model, "input": texts})
    }

    pub fn logprob_body(&self, condition: &str, continuation: &str) -> Value {
        json!({
            "model": self.config.score_model,
            "prompt": format!("{condition}{continuation}"),
            "max_tokens": 0,
            "echo": true,
            "logprobs": 1,
            "temperature": 0.0,
        })
    }

    fn post(&self, url: Option<&String>, what: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = url.ok_or_else(|| ProviderError::NotConfigured(format!("no {what} endpoint URL")))?;
        let mut delay = self.backoff;
        let mut last = ProviderError::Transport("no attempt made".into());
        for attempt in 0..=self.retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.post_once(url, body) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() => {
                    tracing::warn!(attempt, error = %e, "{what} request failed");
                    last = e;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, ProviderError> {
        NETWORK_REQUESTS.fetch_add(1, Ordering::SeqCst);
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let payload = serde_json::to_vec(body).map_err(|e| ProviderError::Input(e.to_string()))?;
        let mut resp = req.send(&payload[..]).map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(ProviderError::Transport(format!("status {status}: {text}")));
        }
        if status >= 400 {
            return Err(ProviderError::Generation(format!("status {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::Generation(format!("invalid JSON response: {e}")))
    }
}

pub fn parse_chat_response(v: &Value) -> Result<ChatResponse, ProviderError> {
    let text = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| ProviderError::Generation("response has no choices[0].message.content".into()))?;
    if text.trim().is_empty() {
        return Err(ProviderError::Generation("empty completion".into()));
    }
    Ok(ChatResponse {
        text: text.to_string(),
        tokens_in: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        tokens_out: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
    })
}

pub fn parse_embed_response(v: &Value, expected: usize) -> Result<Vec<Vec<f64>>, ProviderError> {
    let data = v["data"]
        .as_array()
        .ok_or_else(|| ProviderError::Generation("response has no data array".into()))?;
    if data.len() != expected {
        return Err(ProviderError::Generation(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut items: Vec<(u64, Vec<f64>)> = data
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut emb: Vec<f64> = d["embedding"]
                .as_array()
                .ok_or_else(|| ProviderError::Generation("embedding missing".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| ProviderError::Generation("non-numeric embedding".into())))
                .collect::<Result<_, _>>()?;
            if !l2_normalize(&mut emb) {
                return Err(ProviderError::Generation("zero embedding vector".into()));
            }
            Ok((d["index"].as_u64().unwrap_or(i as u64), emb))
        })
        .collect::<Result<_, ProviderError>>()?;
    items.sort_by_key(|(i, _)| *i);
    Ok(items.into_iter().map(|(_, e)| e).collect())
}

/// Sums echoed log-probabilities of the tokens at or after character offset
/// `continuation_start`.
pub fn parse_logprob_response(v: &Value, continuation_start: usize) -> Result<LikelihoodResult, ProviderError> {
    let lp = &v["choices"][0]["logprobs"];
    let logprobs = lp["token_logprobs"]
        .as_array()
        .ok_or_else(|| ProviderError::Generation("response has no token_logprobs".into()))?;
    let offsets = lp["text_offset"]
        .as_array()
        .ok_or_else(|| ProviderError::Generation("response has no text_offset".into()))?;
    if offsets.len() != logprobs.len() {
        return Err(ProviderError::Generation("token_logprobs and text_offset differ in length".into()));
    }
    let mut sum = 0.0;
    let mut count = 0u32;
    for (off, lp) in offsets.iter().zip(logprobs) {
        let off = off
            .as_u64()
            .ok_or_else(|| ProviderError::Generation("non-integer text_offset".into()))?;
        if (off as usize) < continuation_start {
            continue;
        }
        count += 1;
        // The first token of an unconditioned prompt has no log-probability.
        if let Some(x) = lp.as_f64() {
            sum += x;
        }
    }
    if count == 0 {
        return Err(ProviderError::Generation("no continuation tokens were scored".into()));
    }
    Ok(LikelihoodResult {
        sum_logprob: sum,
        token_count: count,
    })
}

impl ChatModel for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let v = self.post(self.config.chat_url.as_ref(), "chat", &self.chat_body(request))?;
        parse_chat_response(&v)
    }
}

impl Embedder for HttpProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(ProviderError::Input("cannot embed empty text".into()));
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let v = self.post(self.config.embed_url.as_ref(), "embedding", &self.embed_body(texts))?;
        parse_embed_response(&v, texts.len())
    }
}

impl LikelihoodScorer for HttpProvider {
    fn score_likelihood(&self, condition: &str, continuation: &str) -> Result<LikelihoodResult, ProviderError> {
        if continuation.is_empty() {
            return Err(ProviderError::Input("continuation is empty".into()));
        }
        let v = self.post(
            self.config.logprob_url.as_ref(),
            "logprob",
            &self.logprob_body(condition, continuation),
        )?;
        parse_logprob_response(&v, condition.chars().count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_body_carries_prompt_verbatim() {
        let p = HttpProvider::new(HttpConfig::default());
        let req = ChatRequest::new("sys \u{2014} ünïcode\n", "line1\n\tline2 \"quoted\"");
        let body = p.chat_body(&req);
        assert_eq!(body["messages"][0]["content"].as_str().unwrap(), req.system);
        assert_eq!(body["messages"][1]["content"].as_str().unwrap(), req.user);
        assert_eq!(body["max_tokens"], 16_394);
    }

    #[test]
    fn logprob_span_starts_after_condition() {
        let v = json!({"choices": [{"logprobs": {
            "tokens": ["Task", ":", " do", " it"],
            "token_logprobs": [null, -1.0, -0.5, -0.25],
            "text_offset": [0, 4, 5, 8]
        }}]});
        let r = parse_logprob_response(&v, 5).unwrap();
        assert_eq!(r.token_count, 2);
        assert!((r.sum_logprob + 0.75).abs() < 1e-12);
        let all = parse_logprob_response(&v, 0).unwrap();
        assert_eq!(all.token_count, 4);
        assert!((all.sum_logprob + 1.75).abs() < 1e-12);
    }

    #[test]
    fn embed_response_is_normalized_and_ordered() {
        let v = json!({"data": [
            {"index": 1, "embedding": [0.0, 2.0]},
            {"index": 0, "embedding": [3.0, 4.0]}
        ]});
        let e = parse_embed_response(&v, 2).unwrap();
        assert_eq!(e[0], vec![0.6, 0.8]);
        assert_eq!(e[1], vec![0.0, 1.0]);
        assert!(parse_embed_response(&v, 3).is_err());
    }

    #[test]
    fn missing_url_is_not_configured() {
        let p = HttpProvider::new(HttpConfig::default());
        let err = p.complete(&ChatRequest::new("s", "u")).unwrap_err();
        assert!(matches!(err, ProviderError::NotConfigured(_)));
    }

    #[test]
    fn empty_completion_is_generation_error() {
        let v = json!({"choices": [{"message": {"content": "  "}}]});
        assert!(matches!(parse_chat_response(&v), Err(ProviderError::Generation(_))));
    }
}
