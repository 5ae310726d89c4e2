//! Okapi BM25 over skill name, description and body.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::SkillLibrary;
use crate::text::tokenize;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_RETRIEVAL_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Document {
    id: String,
    tf: BTreeMap<String, u32>,
    len: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    documents: Vec<Document>,
    df: BTreeMap<String, u32>,
    avgdl: f64,
    k1: f64,
    b: f64,
}

impl Bm25Index {
    pub fn build(library: &SkillLibrary) -> Self {
        Self::build_with(library, DEFAULT_K1, DEFAULT_B)
    }

    pub fn build_with(library: &SkillLibrary, k1: f64, b: f64) -> Self {
        Self::from_documents(
            library.skills().iter().map(|s| (s.id.clone(), s.document_text())),
            k1,
            b,
        )
    }

    pub fn from_documents(docs: impl IntoIterator<Item = (String, String)>, k1: f64, b: f64) -> Self {
        let mut documents = Vec::new();
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        for (id, text) in docs {
            let tokens = tokenize(&text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            documents.push(Document {
                id,
                len: tokens.len() as u32,
                tf,
            });
        }
        let avgdl = if documents.is_empty() {
            0.0
        } else {
            documents.iter().map(|d| f64::from(d.len)).sum::<f64>() / documents.len() as f64
        };
        Self {
            documents,
            df,
            avgdl,
            k1,
            b,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn df(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.documents.len() as f64;
        let df = f64::from(self.df(term));
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top `k` documents with positive score, by score descending then id.
    /// Repeated query terms count once.
    pub fn retrieve(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().filter(|t| self.df.contains_key(t)).collect();
        if terms.is_empty() || k == 0 {
            return Vec::new();
        }
        let idf: HashMap<&str, f64> = terms.iter().map(|t| (t.as_str(), self.idf(t))).collect();
        let mut scored: Vec<(String, f64)> = self
            .documents
            .iter()
            .filter_map(|d| {
                let norm = self.k1 * (1.0 - self.b + self.b * f64::from(d.len) / self.avgdl);
                let score: f64 = terms
                    .iter()
                    .filter_map(|t| d.tf.get(t).map(|&tf| (t, f64::from(tf))))
                    .map(|(t, tf)| idf[t.as_str()] * tf * (self.k1 + 1.0) / (tf + norm))
                    .sum();
                (score > 0.0).then(|| (d.id.clone(), score))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}
