//! Seeded, deterministic stand-ins for the chat, embedding and likelihood
//! providers. Every output is a pure function of the seed and the inputs.

use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use crate::error::ProviderError;
use crate::hash::{hash_parts, splitmix64, unit_f64};
use crate::prompts;
use crate::tags::KnowledgeTag;
use crate::text::tokenize;

use super::{l2_normalize, ChatModel, ChatRequest, ChatResponse, Embedder, LikelihoodResult, LikelihoodScorer};

pub const DEFAULT_EMBED_DIM: usize = 64;

const FALLBACK_TAGS: usize = 3;

const STOPWORDS: &[&str] = &[
    "about", "action", "after", "again", "also", "answer", "before", "each", "every", "failed",
    "final", "from", "have", "into", "knowledge", "list", "name", "observation", "output",
    "recorded", "skill", "steps", "tags", "task", "that", "their", "then", "there", "these",
    "this", "trajectory", "what", "when", "which", "with", "without", "content", "description",
    "line", "requires", "one", "per", "the", "and", "for",
];

/// Mock chat model.
///
/// It recognizes the three pipeline roles by their system prompt:
///
/// * tagging prompts: returns every vocabulary tag whose phrase occurs in the
///   user text, or, with no vocabulary hit, three hash-chosen content words;
/// * synthesis prompts: returns a NAME/DESCRIPTION/BODY skill whose text
///   mentions the union of the source-skill tags and a seeded subset of the
///   uncovered tags. With probability `noise_rate` a candidate is noisy: it
///   also mentions as many irrelevant tags from `distractors` as it has real
///   ones, preferring those that share the most words with its real tags, and keeps
///   only half of the uncovered tags;
/// * anything else: a deterministic placeholder sentence.
#[derive(Debug, Clone)]
pub struct MockChat {
    seed: u64,
    vocabulary: Vec<(KnowledgeTag, String)>,
    distractors: Vec<KnowledgeTag>,
    noise_rate: f64,
    uncovered_keep: f64,
}

impl MockChat {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            vocabulary: Vec::new(),
            distractors: Vec::new(),
            noise_rate: 0.0,
            uncovered_keep: 1.0,
        }
    }

    /// Tags the tagger can recognize in free text.
    pub fn with_vocabulary(mut self, tags: impl IntoIterator<Item = KnowledgeTag>) -> Self {
        let mut v: Vec<_> = tags
            .into_iter()
            .map(|t| {
                let phrase = format!(" {} ", tokenize(t.as_str()).join(" "));
                (t, phrase)
            })
            .collect();
        v.sort();
        v.dedup();
        self.vocabulary = v;
        self
    }

    /// Tags a noisy candidate may pick up; they are also added to the vocabulary.
    pub fn with_distractors(mut self, tags: impl IntoIterator<Item = KnowledgeTag>) -> Self {
        let mut d: Vec<_> = tags.into_iter().collect();
        d.sort();
        d.dedup();
        let vocab: Vec<_> = self.vocabulary.iter().map(|(t, _)| t.clone()).chain(d.iter().cloned()).collect();
        self.distractors = d;
        self.with_vocabulary(vocab)
    }

    pub fn with_noise_rate(mut self, rate: f64) -> Self {
        self.noise_rate = rate.clamp(0.0, 1.0);
        self
    }

    /// Fraction of uncovered tags a clean candidate carries over.
    pub fn with_uncovered_keep(mut self, keep: f64) -> Self {
        self.uncovered_keep = keep.clamp(0.0, 1.0);
        self
    }

    fn find_tags(&self, text: &str) -> Vec<KnowledgeTag> {
        let hay = format!(" {} ", tokenize(text).join(" "));
        let found: Vec<_> = self
            .vocabulary
            .iter()
            .filter(|(_, phrase)| hay.contains(phrase.as_str()))
            .map(|(t, _)| t.clone())
            .collect();
        if !found.is_empty() {
            return found;
        }
        let mut words: Vec<String> = tokenize(text)
            .into_iter()
            .filter(|w| w.len() >= 4 && !STOPWORDS.contains(&w.as_str()) && !w.chars().all(|c| c.is_ascii_digit()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        words.sort_by_key(|w| hash_parts(self.seed, &["fallback", w]));
        words
            .into_iter()
            .take(FALLBACK_TAGS)
            .filter_map(|w| KnowledgeTag::new(&w).ok())
            .collect()
    }

    fn tag_response(&self, user: &str) -> String {
        let tags = self.find_tags(user);
        let mut out = String::new();
        for t in tags {
            out.push_str("- ");
            out.push_str(&t.phrase());
            out.push('\n');
        }
        out
    }

    fn generation_response(&self, user: &str) -> String {
        let h = hash_parts(self.seed, &["generate", user]);
        let mut tags: BTreeSet<KnowledgeTag> = BTreeSet::new();
        for line in prompts::section(user, prompts::SOURCE_SECTION) {
            if let Some(rest) = line.strip_prefix(prompts::SOURCE_TAGS_PREFIX) {
                tags.extend(rest.split(',').filter_map(|t| KnowledgeTag::new(t).ok()));
            }
        }
        let uncovered: Vec<KnowledgeTag> = prompts::section(user, prompts::UNCOVERED_SECTION)
            .into_iter()
            .filter_map(|l| l.strip_prefix("- "))
            .filter_map(|t| KnowledgeTag::new(t).ok())
            .collect();
        let noisy = unit_f64(splitmix64(h ^ 0x6e6f_6973_65)) < self.noise_rate;
        let keep = if noisy { self.uncovered_keep * 0.5 } else { self.uncovered_keep };
        for (i, t) in uncovered.iter().enumerate() {
            let draw = unit_f64(hash_parts(h, &["keep", t.as_str(), &i.to_string()]));
            if draw < keep {
                tags.insert(t.clone());
            }
        }
        if noisy && !self.distractors.is_empty() {
            let want = tags.len().max(1);
            // Distractors sharing the most words with the real tags come first.
            let words: BTreeSet<String> = tags.iter().chain(&uncovered).flat_map(|t| tokenize(t.as_str())).collect();
            let mut pool: Vec<&KnowledgeTag> = self.distractors.iter().filter(|d| !tags.contains(*d)).collect();
            pool.sort_by_key(|d| {
                let shared = tokenize(d.as_str()).iter().filter(|w| words.contains(*w)).count();
                (std::cmp::Reverse(shared), hash_parts(h, &["distract", d.as_str()]))
            });
            let extra: Vec<_> = pool.into_iter().take(want).cloned().collect();
            tags.extend(extra);
        }
        if tags.is_empty() {
            // Nothing to transfer: fall back to the task's own content words.
            let task = prompts::section(user, prompts::TASK_SECTION).join("\n");
            tags.extend(self.find_tags(&task));
        }
        render_skill(h, &tags)
    }
}

const VERBS: &[&str] = &["Check", "Apply", "Confirm", "Work through", "Validate", "Plan"];

fn render_skill(h: u64, tags: &BTreeSet<KnowledgeTag>) -> String {
    let phrases: Vec<String> = tags.iter().map(KnowledgeTag::phrase).collect();
    let name = match phrases.first() {
        Some(p) => format!("Procedure for {p}"),
        None => "General procedure".to_string(),
    };
    let mut body = String::from("Use this procedure for any task in the same family.\n");
    for (i, p) in phrases.iter().enumerate() {
        let verb = VERBS[(splitmix64(h.wrapping_add(i as u64)) % VERBS.len() as u64) as usize];
        body.push_str(&format!("{}. {verb} the {p} requirements before producing output.\n", i + 1));
    }
    body.push_str(&format!("{}. Verify the final output against every requirement.\n", phrases.len() + 1));
    format!(
        "NAME: {name}\nDESCRIPTION: Reusable procedure covering {}.\nBODY:\n{body}",
        if phrases.is_empty() { "general task handling".to_string() } else { phrases.join(", ") }
    )
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl ChatModel for MockChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let text = match request.system.as_str() {
            prompts::SKILL_TAG_SYSTEM | prompts::TARGET_TAG_SYSTEM => self.tag_response(&request.user),
            prompts::GENERATE_SYSTEM => self.generation_response(&request.user),
            prompts::PARAPHRASE_SYSTEM => request.user.clone(),
            _ => format!(
                "mock response {:016x}",
                hash_parts(self.seed, &[&request.system, &request.user])
            ),
        };
        if text.trim().is_empty() {
            return Err(ProviderError::Generation("mock produced an empty response".into()));
        }
        Ok(ChatResponse {
            tokens_in: word_count(&request.system) + word_count(&request.user),
            tokens_out: word_count(&text),
            text,
        })
    }
}

/// Chat provider that replays canned responses keyed by user text, falling
/// back to a queue of default responses.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    by_user: HashMap<String, String>,
    queue: Mutex<Vec<String>>,
}

impl ScriptedChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn respond_to(mut self, user: impl Into<String>, response: impl Into<String>) -> Self {
        self.by_user.insert(user.into(), response.into());
        self
    }

    /// Responses handed out in order to requests without a keyed answer.
    pub fn then(self, response: impl Into<String>) -> Self {
        self.queue.lock().unwrap().push(response.into());
        self
    }
}

impl ChatModel for ScriptedChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let text = match self.by_user.get(&request.user) {
            Some(t) => t.clone(),
            None => {
                let mut q = self.queue.lock().unwrap();
                if q.is_empty() {
                    return Err(ProviderError::Generation("script exhausted".into()));
                }
                q.remove(0)
            }
        };
        Ok(ChatResponse {
            tokens_in: word_count(&request.user),
            tokens_out: word_count(&text),
            text,
        })
    }
}

/// Signed feature hashing of character trigrams, L2-normalized.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    seed: u64,
    dim: usize,
}

impl MockEmbedder {
    pub fn new(seed: u64) -> Self {
        Self::with_dim(seed, DEFAULT_EMBED_DIM)
    }

    pub fn with_dim(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { seed, dim }
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::Input("cannot embed empty text".into()));
        }
        let padded: Vec<char> = format!("#{}#", text.to_lowercase()).chars().collect();
        let mut v = vec![0.0; self.dim];
        for w in padded.windows(3.min(padded.len())) {
            let gram: String = w.iter().collect();
            let h = hash_parts(self.seed, &[&gram]);
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        }
        if !l2_normalize(&mut v) {
            let bucket = (hash_parts(self.seed, &[text]) % self.dim as u64) as usize;
            v[bucket] = 1.0;
        }
        Ok(v)
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

/// Likelihood scorer over word tokens.
///
/// Each token has a seeded base log-probability in `[-5, -1)`. Tokens of the
/// continuation that also occur in the condition gain `bonus`, so the
/// per-token conditional-minus-unconditional difference equals
/// `bonus * overlap_fraction`.
#[derive(Debug, Clone)]
pub struct MockScorer {
    seed: u64,
    bonus: f64,
}

pub const DEFAULT_CONDITION_BONUS: f64 = 1.0;

impl MockScorer {
    pub fn new(seed: u64) -> Self {
        Self::with_bonus(seed, DEFAULT_CONDITION_BONUS)
    }

    pub fn with_bonus(seed: u64, bonus: f64) -> Self {
        Self { seed, bonus }
    }

    pub fn base_logprob(&self, token: &str) -> f64 {
        -1.0 - 4.0 * unit_f64(hash_parts(self.seed, &["lp", token]))
    }
}

impl LikelihoodScorer for MockScorer {
    fn score_likelihood(&self, condition: &str, continuation: &str) -> Result<LikelihoodResult, ProviderError> {
        let tokens = tokenize(continuation);
        if tokens.is_empty() {
            return Err(ProviderError::Input("continuation has no tokens".into()));
        }
        let context: BTreeSet<String> = tokenize(condition).into_iter().collect();
        let sum_logprob = tokens
            .iter()
            .map(|t| self.base_logprob(t) + if context.contains(t) { self.bonus } else { 0.0 })
            .sum();
        Ok(LikelihoodResult {
            sum_logprob,
            token_count: u32::try_from(tokens.len()).unwrap_or(u32::MAX),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::cosine;
    use crate::tags::TagSet;
    use rand::{Rng, SeedableRng};

    #[test]
    fn chat_is_deterministic() {
        let chat = MockChat::new(7);
        let req = ChatRequest::new("sys", "hello there");
        assert_eq!(chat.complete(&req).unwrap(), chat.complete(&req).unwrap());
    }

    #[test]
    fn chat_distinguishes_requests() {
        let chat = MockChat::new(7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a: u64 = rng.random();
            let b: u64 = rng.random();
            if a == b {
                continue;
            }
            let ra = chat.complete(&ChatRequest::new("sys", format!("user {a}"))).unwrap();
            let rb = chat.complete(&ChatRequest::new("sys", format!("user {b}"))).unwrap();
            assert_ne!(ra.text, rb.text);
        }
    }

    #[test]
    fn chat_rejects_zero_max_tokens() {
        let mut req = ChatRequest::new("sys", "u");
        req.max_tokens = 0;
        assert!(matches!(MockChat::new(1).complete(&req), Err(ProviderError::Input(_))));
    }

    #[test]
    fn tagger_finds_vocabulary_phrases() {
        let vocab = TagSet::from_raw(["video editing", "pdf text extraction", "latex table"]).unwrap();
        let chat = MockChat::new(1).with_vocabulary(vocab);
        let req = ChatRequest::new(prompts::SKILL_TAG_SYSTEM, "Cut clips (video-editing) then run PDF text extraction.");
        let resp = chat.complete(&req).unwrap();
        assert_eq!(resp.text, "- pdf text extraction\n- video editing\n");
    }

    #[test]
    fn embeddings_are_unit_and_deterministic() {
        let e = MockEmbedder::new(3);
        let a = e.embed(&["abc".to_string()]).unwrap();
        assert_eq!(a, e.embed(&["abc".to_string()]).unwrap());
        for text in ["abc", "x", "pdf_text_extraction", "a much longer string of words"] {
            let v = e.embed_one(text).unwrap();
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6, "{text}: {n}");
            assert_eq!(cosine(&v, &e.embed_one(text).unwrap()), 1.0);
        }
        assert!(matches!(e.embed(&["  ".to_string()]), Err(ProviderError::Input(_))));
    }

    #[test]
    fn similar_strings_are_close_and_different_ones_far() {
        let e = MockEmbedder::new(0);
        let a = e.embed_one("table_formatting").unwrap();
        let b = e.embed_one("table_formattings").unwrap();
        let c = e.embed_one("video_editing").unwrap();
        assert!(cosine(&a, &b) > 0.85);
        assert!(cosine(&a, &c) < 0.5);
    }

    #[test]
    fn conditioning_on_matching_text_raises_likelihood() {
        let s = MockScorer::new(5);
        let body = "Convert the latex table into aligned columns";
        let cond = s.score_likelihood("Please build a latex table with aligned columns", body).unwrap();
        let uncond = s.score_likelihood("", body).unwrap();
        assert!(cond.sum_logprob > uncond.sum_logprob);
        assert_eq!(cond.token_count, 7);
        // latex, table, aligned, columns overlap
        assert!((cond.sum_logprob - uncond.sum_logprob - 4.0).abs() < 1e-12);
        assert_eq!(s.score_likelihood("x", body).unwrap(), s.score_likelihood("x", body).unwrap());
        assert!(matches!(s.score_likelihood("x", ""), Err(ProviderError::Input(_))));
    }
}
