use crate::error::{Error, Result};
use crate::model::{FailurePair, Skill};
use crate::prompts;
use crate::providers::{ChatModel, ChatRequest};

use super::{normalize_tag, TagSet};

const MAX_RETRIES: usize = 2;
const MAX_TAG_WORDS: usize = 6;
const MAX_TAG_CHARS: usize = 64;

/// Parses a tag list from chat output.
///
/// Accepts one tag per line or comma/semicolon separated lists. Bullets,
/// numbering, quotes and a leading `tags:` label are stripped; header lines
/// ending in `:` and prose-length entries are skipped.
pub fn parse_tag_list(text: &str) -> TagSet {
    let mut out = TagSet::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.ends_with(':') {
            continue;
        }
        let line = strip_label(line);
        for piece in line.split([',', ';']) {
            let item = clean_item(piece);
            if item.is_empty()
                || item.chars().count() > MAX_TAG_CHARS
                || item.split_whitespace().count() > MAX_TAG_WORDS
            {
                continue;
            }
            if let Ok(tag) = normalize_tag(&item) {
                out.insert(tag);
            }
        }
    }
    out
}

fn strip_label(line: &str) -> &str {
    let lower = line.to_lowercase();
    for label in ["knowledge tags:", "tags:"] {
        if lower.starts_with(label) {
            return &line[label.len()..];
        }
    }
    line
}

fn clean_item(piece: &str) -> String {
    let mut s = piece.trim();
    loop {
        let before = s;
        s = s.trim_start_matches(['-', '*', '•', '+', '>']).trim_start();
        let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 {
            let rest = &s[digits..];
            if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
                s = r.trim_start();
            }
        }
        if s == before {
            break;
        }
    }
    s.trim_matches(|c: char| c == '"' || c == '\'' || c == '`' || c == '*' || c == '.' || c.is_whitespace())
        .to_string()
}

fn tag_with_retries(chat: &dyn ChatModel, system: &str, user: String, what: &str) -> Result<TagSet> {
    let mut request = ChatRequest::new(system, user);
    for attempt in 0..=MAX_RETRIES {
        let resp = chat.complete(&request)?;
        let tags = parse_tag_list(&resp.text);
        if !tags.is_empty() {
            return Ok(tags);
        }
        tracing::debug!(attempt, what, "tag output unparseable, re-asking");
        if attempt == 0 {
            request.user.push_str(prompts::retry_suffix());
        }
    }
    Err(Error::Tagging(format!(
        "no tags could be parsed for {what} after {MAX_RETRIES} retries"
    )))
}

/// Tags an existing skill, `K_s`.
pub fn generate_skill_tags(skill: &Skill, chat: &dyn ChatModel) -> Result<TagSet> {
    if skill.body.trim().is_empty() {
        return Err(Error::Input(format!("skill {} has an empty body", skill.id)));
    }
    tag_with_retries(
        chat,
        prompts::SKILL_TAG_SYSTEM,
        prompts::skill_tag_prompt(skill),
        &format!("skill {}", skill.id),
    )
}

/// Infers the target tags `K*(x, τ)` of a failed task–trajectory pair.
pub fn generate_target_tags(pair: &FailurePair, chat: &dyn ChatModel) -> Result<TagSet> {
    pair.task.check()?;
    tag_with_retries(
        chat,
        prompts::TARGET_TAG_SYSTEM,
        prompts::target_tag_prompt(pair),
        &format!("task {}", pair.task.id),
    )
}
