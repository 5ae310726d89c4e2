//! Knowledge tags: normalization, tag sets, semantic equivalence and quality metrics.

mod equivalence;
mod generate;
pub(crate) mod metrics;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use equivalence::{EquivalenceIndex, DEFAULT_DELTA};
pub use generate::{generate_skill_tags, generate_target_tags, parse_tag_list};
pub use metrics::{f1, self_consistency, tag_quality_metrics, Prf, TagQuality};

/// A normalized knowledge tag such as `pdf_text_extraction`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct KnowledgeTag(String);

impl KnowledgeTag {
    pub fn new(raw: &str) -> Result<Self> {
        normalize_tag(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The tag rendered as prose (`pdf_text_extraction` -> `pdf text extraction`).
    pub fn phrase(&self) -> String {
        self.0.replace('_', " ")
    }
}

impl fmt::Display for KnowledgeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for KnowledgeTag {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        normalize_tag(&s)
    }
}

impl From<KnowledgeTag> for String {
    fn from(t: KnowledgeTag) -> String {
        t.0
    }
}

/// Lowercases, trims, and collapses every run of whitespace and underscores
/// into a single `_`.
pub fn normalize_tag(raw: &str) -> Result<KnowledgeTag> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(Error::Input(format!("tag {raw:?} is empty after trimming")));
    }
    let mut out = String::with_capacity(trimmed.len());
    let mut in_sep = false;
    for ch in trimmed.chars() {
        if ch.is_whitespace() || ch == '_' {
            if !in_sep {
                out.push('_');
                in_sep = true;
            }
        } else {
            out.extend(ch.to_lowercase());
            in_sep = false;
        }
    }
    Ok(KnowledgeTag(out))
}

/// A set of normalized tags. Serialized as a sorted JSON list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagSet(BTreeSet<KnowledgeTag>);

impl TagSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Normalizes and deduplicates raw strings.
    pub fn from_raw<I, S>(raw: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        raw.into_iter()
            .map(|s| normalize_tag(s.as_ref()))
            .collect::<Result<BTreeSet<_>>>()
            .map(TagSet)
    }

    pub fn insert(&mut self, tag: KnowledgeTag) -> bool {
        self.0.insert(tag)
    }

    pub fn contains(&self, tag: &KnowledgeTag) -> bool {
        self.0.contains(tag)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &KnowledgeTag> {
        self.0.iter()
    }

    pub fn union(&self, other: &TagSet) -> TagSet {
        TagSet(self.0.union(&other.0).cloned().collect())
    }

    /// Comma-separated rendering used in prompts and reports.
    pub fn joined(&self, sep: &str) -> String {
        self.0.iter().map(KnowledgeTag::as_str).collect::<Vec<_>>().join(sep)
    }
}

impl FromIterator<KnowledgeTag> for TagSet {
    fn from_iter<T: IntoIterator<Item = KnowledgeTag>>(iter: T) -> Self {
        TagSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a TagSet {
    type Item = &'a KnowledgeTag;
    type IntoIter = std::collections::btree_set::Iter<'a, KnowledgeTag>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl IntoIterator for TagSet {
    type Item = KnowledgeTag;
    type IntoIter = std::collections::btree_set::IntoIter<KnowledgeTag>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}
