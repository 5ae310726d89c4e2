//! Candidate-skill synthesis from failure pairs.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::{select_sources, CoverInstance, SelectionResult, Strategy};
use crate::error::{Error, Result};
use crate::model::{FailurePair, Origin, Skill, SkillLibrary};
use crate::prompts;
use crate::providers::{ChatModel, ChatRequest, Embedder, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::scoring::ScoreRecord;
use crate::tags::{generate_skill_tags, EquivalenceIndex, TagSet};

const MAX_REASKS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSkill {
    pub skill: Skill,
    pub source_pair_id: String,
    pub selection: SelectionResult,
    #[serde(default)]
    pub scores: Option<ScoreRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    pub candidates_per_pair: u32,
    /// Epoch the candidates belong to; also the epoch the library reaches once they are added.
    pub epoch: u32,
    pub strategy: Strategy,
    #[serde(default)]
    pub dump_prompts: Option<PathBuf>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            candidates_per_pair: 1,
            epoch: 1,
            strategy: Strategy::Greedy,
            dump_prompts: None,
        }
    }
}

/// A failure pair with its inferred target tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetedPair {
    pub pair: FailurePair,
    pub target: TagSet,
}

/// Target tags whose class is left uncovered by `selection`.
pub fn uncovered_tags(target: &TagSet, selection: &SelectionResult, index: &EquivalenceIndex) -> TagSet {
    target
        .iter()
        .filter(|t| selection.uncovered.contains(index.class_or_self(t).as_str()))
        .cloned()
        .collect()
}

/// Builds the synthesis request. `sources` may come in any order; they are
/// laid out in selection order.
pub fn assemble_generation_prompt(
    pair: &FailurePair,
    selection: &SelectionResult,
    sources: &[&Skill],
    uncovered: &TagSet,
    config: &GenerationConfig,
) -> Result<ChatRequest> {
    if sources.len() != selection.selected.len() {
        return Err(Error::Input(format!(
            "{} source skills given for a selection of {}",
            sources.len(),
            selection.selected.len()
        )));
    }
    let ordered = selection
        .selected
        .iter()
        .map(|id| {
            sources
                .iter()
                .find(|s| &s.id == id)
                .copied()
                .ok_or_else(|| Error::Input(format!("selected skill {id} missing from sources")))
        })
        .collect::<Result<Vec<&Skill>>>()?;
    let mut request = ChatRequest::new(
        prompts::GENERATE_SYSTEM,
        prompts::generation_prompt(pair, &ordered, uncovered),
    );
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;
    Ok(request)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSkill {
    pub name: String,
    pub description: String,
    pub body: String,
}

fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let l = line.trim_start().trim_start_matches(['*', '#', ' ']);
    let head = l.get(..key.len())?;
    if !head.eq_ignore_ascii_case(key) {
        return None;
    }
    let rest = l[key.len()..].trim_start_matches('*');
    rest.strip_prefix(':').map(|r| r.trim_start_matches('*').trim())
}

/// Parses a `NAME: / DESCRIPTION: / BODY:` response. The body runs to the end.
pub fn parse_skill_response(text: &str) -> Option<ParsedSkill> {
    let mut name = None;
    let mut description = None;
    let mut body: Option<Vec<&str>> = None;
    for line in text.lines() {
        if let Some(b) = body.as_mut() {
            b.push(line);
        } else if let Some(v) = field(line, "NAME") {
            name.get_or_insert(v);
        } else if let Some(v) = field(line, "DESCRIPTION") {
            description.get_or_insert(v);
        } else if let Some(v) = field(line, "BODY") {
            body = Some(if v.is_empty() { Vec::new() } else { vec![v] });
        }
    }
    let body = body?.join("\n").trim().to_string();
    let name = name?.to_string();
    if name.is_empty() || body.is_empty() {
        return None;
    }
    Some(ParsedSkill {
        name,
        description: description.unwrap_or_default().to_string(),
        body,
    })
}

fn dump_prompt(dir: &PathBuf, id: &str, request: &ChatRequest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{id}.txt"));
    let text = format!("[system]\n{}\n\n[user]\n{}", request.system, request.user);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn complete_skill(chat: &dyn ChatModel, request: &ChatRequest) -> Result<ParsedSkill> {
    let mut req = request.clone();
    for attempt in 0..=MAX_REASKS {
        let resp = chat.complete(&req)?;
        if let Some(p) = parse_skill_response(&resp.text) {
            return Ok(p);
        }
        tracing::debug!(attempt, "skill response unparseable, re-asking");
        if attempt == 0 {
            req.user.push_str(prompts::retry_suffix());
        }
    }
    Err(Error::Input(format!("malformed skill text after {MAX_REASKS} re-asks")))
}

fn generate_for_pair(
    tp: &TargetedPair,
    library: &SkillLibrary,
    index: &EquivalenceIndex,
    chat: &dyn ChatModel,
    config: &GenerationConfig,
) -> Result<Vec<CandidateSkill>> {
    let instance = CoverInstance::from_skills(&tp.target, library.skills(), index)?;
    let selection = select_sources(&instance, config.strategy)?;
    let sources: Vec<&Skill> = selection
        .selected
        .iter()
        .map(|id| library.get(id).ok_or_else(|| Error::Integrity(format!("selected unknown skill {id}"))))
        .collect::<Result<_>>()?;
    let uncovered = uncovered_tags(&tp.target, &selection, index);
    let base = assemble_generation_prompt(&tp.pair, &selection, &sources, &uncovered, config)?;
    let mut out = Vec::new();
    for seq in 0..config.candidates_per_pair {
        let id = Skill::evolved_id(config.epoch, tp.pair.id(), seq);
        let mut request = base.clone();
        if seq > 0 {
            request.user.push_str(&format!("\n\nThis is variant {} of the skill.", seq + 1));
        }
        if let Some(dir) = &config.dump_prompts {
            dump_prompt(dir, &id, &request)?;
        }
        let parsed = match complete_skill(chat, &request) {
            Ok(p) => p,
            Err(e) => {
                tracing::warn!(pair = tp.pair.id(), candidate = %id, error = %e, "skipping candidate");
                continue;
            }
        };
        out.push(CandidateSkill {
            skill: Skill {
                id,
                name: parsed.name,
                description: parsed.description,
                body: parsed.body,
                tags: TagSet::new(),
                origin: Origin::Evolved { epoch: config.epoch },
                created_epoch: config.epoch,
            },
            source_pair_id: tp.pair.id().to_string(),
            selection: selection.clone(),
            scores: None,
        });
    }
    Ok(out)
}

/// One candidate per pair and seed slot, in pair-id order. Pairs whose
/// generation fails are logged and skipped. Candidates come back untagged.
pub fn generate_candidates(
    failures: &[TargetedPair],
    library: &SkillLibrary,
    index: &EquivalenceIndex,
    chat: &dyn ChatModel,
    config: &GenerationConfig,
) -> Result<Vec<CandidateSkill>> {
    if config.candidates_per_pair == 0 {
        return Err(Error::Config("candidates_per_pair must be at least 1".into()));
    }
    let mut per_pair: Vec<(String, Vec<CandidateSkill>)> = failures
        .par_iter()
        .map(|tp| {
            let cands = match generate_for_pair(tp, library, index, chat, config) {
                Ok(c) => c,
                Err(Error::Provider(e)) => {
                    tracing::warn!(pair = tp.pair.id(), error = %e, "generation failed, skipping pair");
                    Vec::new()
                }
                Err(e) => return Err(e),
            };
            Ok((tp.pair.id().to_string(), cands))
        })
        .collect::<Result<_>>()?;
    per_pair.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(per_pair.into_iter().flat_map(|(_, c)| c).collect())
}

/// Tags candidates through the tag engine and registers the tags in `index`.
/// Candidates whose tagging fails are dropped with a warning.
pub fn tag_candidates(
    candidates: Vec<CandidateSkill>,
    chat: &dyn ChatModel,
    index: &mut EquivalenceIndex,
    embedder: &dyn Embedder,
) -> Result<Vec<CandidateSkill>> {
    let tagged: Vec<Option<CandidateSkill>> = candidates
        .into_par_iter()
        .map(|mut c| match generate_skill_tags(&c.skill, chat) {
            Ok(tags) => {
                c.skill.tags = tags;
                Some(c)
            }
            Err(e) => {
                tracing::warn!(candidate = %c.skill.id, error = %e, "tagging failed, dropping candidate");
                None
            }
        })
        .collect();
    let tagged: Vec<CandidateSkill> = tagged.into_iter().flatten().collect();
    index.insert(tagged.iter().flat_map(|c| c.skill.tags.iter()), embedder)?;
    Ok(tagged)
}
