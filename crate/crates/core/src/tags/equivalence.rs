use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::providers::{cosine, Embedder};

use super::{KnowledgeTag, TagSet};

pub const DEFAULT_DELTA: f64 = 0.9;

/// Partition of known tags into semantic-equivalence classes.
///
/// Two tags are joined when the cosine similarity of their embeddings is at
/// least `delta`; classes are the transitive closure of that relation
/// (union-find). Each class is represented by its lexicographically smallest
/// member. The index only grows: inserting tags can merge classes but never
/// splits one.
#[derive(Debug, Clone)]
pub struct EquivalenceIndex {
    delta: f64,
    tags: Vec<KnowledgeTag>,
    position: HashMap<KnowledgeTag, usize>,
    vectors: Vec<Option<Vec<f64>>>,
    parent: Vec<usize>,
    /// Smallest member of each root's class, valid at roots.
    smallest: Vec<usize>,
    /// Fully resolved representative of each tag, refreshed after every mutation.
    rep: Vec<usize>,
}

impl EquivalenceIndex {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Input(format!("delta {delta} must lie in (0, 1]")));
        }
        Ok(Self {
            delta,
            tags: Vec::new(),
            position: HashMap::new(),
            vectors: Vec::new(),
            parent: Vec::new(),
            smallest: Vec::new(),
            rep: Vec::new(),
        })
    }

    /// Embeds `tags` and builds the closure of the cosine-at-least-`delta` graph.
    pub fn build<'a>(
        tags: impl IntoIterator<Item = &'a KnowledgeTag>,
        embedder: &dyn Embedder,
        delta: f64,
    ) -> Result<Self> {
        let mut index = Self::new(delta)?;
        index.insert(tags, embedder)?;
        Ok(index)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn contains(&self, tag: &KnowledgeTag) -> bool {
        self.position.contains_key(tag)
    }

    /// Registers new tags, embedding only those not already present.
    pub fn insert<'a>(
        &mut self,
        tags: impl IntoIterator<Item = &'a KnowledgeTag>,
        embedder: &dyn Embedder,
    ) -> Result<()> {
        let fresh: Vec<KnowledgeTag> = tags
            .into_iter()
            .filter(|t| !self.contains(t))
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if fresh.is_empty() {
            return Ok(());
        }
        let texts: Vec<String> = fresh.iter().map(|t| t.as_str().to_string()).collect();
        let vectors = embedder.embed(&texts)?;
        if vectors.len() != fresh.len() {
            return Err(Error::Input(format!(
                "embedder returned {} vectors for {} tags",
                vectors.len(),
                fresh.len()
            )));
        }
        for (tag, v) in fresh.into_iter().zip(vectors) {
            let id = self.push(tag, Some(v));
            for other in 0..id {
                let similar = match (&self.vectors[id], &self.vectors[other]) {
                    (Some(a), Some(b)) => cosine(a, b) >= self.delta,
                    _ => false,
                };
                if similar {
                    self.union(id, other);
                }
            }
        }
        self.refresh();
        Ok(())
    }

    /// Registers a tag with no embedding; it joins classes only via [`merge`](Self::merge).
    pub fn insert_isolated(&mut self, tag: KnowledgeTag) {
        if !self.contains(&tag) {
            self.push(tag, None);
            self.refresh();
        }
    }

    /// Declares two registered tags equivalent.
    pub fn merge(&mut self, a: &KnowledgeTag, b: &KnowledgeTag) -> Result<()> {
        let ia = self.id(a)?;
        let ib = self.id(b)?;
        self.union(ia, ib);
        self.refresh();
        Ok(())
    }

    /// The class representative of `tag`.
    pub fn class_of(&self, tag: &KnowledgeTag) -> Result<&KnowledgeTag> {
        Ok(&self.tags[self.rep[self.id(tag)?]])
    }

    /// Class of `tag`, or the tag itself when it is not registered.
    pub fn class_or_self<'a>(&'a self, tag: &'a KnowledgeTag) -> &'a KnowledgeTag {
        self.class_of(tag).unwrap_or(tag)
    }

    pub fn equivalent(&self, a: &KnowledgeTag, b: &KnowledgeTag) -> Result<bool> {
        Ok(self.class_of(a)? == self.class_of(b)?)
    }

    /// Maps each tag to its class representative, deduplicating.
    pub fn canonical(&self, tags: &TagSet) -> Result<BTreeSet<KnowledgeTag>> {
        tags.iter().map(|t| self.class_of(t).cloned()).collect()
    }

    /// `|canonical(a) ∩ canonical(b)|`.
    pub fn semantic_intersection(&self, a: &TagSet, b: &TagSet) -> Result<usize> {
        let ca = self.canonical(a)?;
        let cb = self.canonical(b)?;
        Ok(ca.intersection(&cb).count())
    }

    /// Tag → representative, for debugging and golden tests.
    pub fn dump(&self) -> BTreeMap<String, String> {
        self.tags
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str().to_string(), self.tags[self.rep[i]].as_str().to_string()))
            .collect()
    }

    fn id(&self, tag: &KnowledgeTag) -> Result<usize> {
        self.position
            .get(tag)
            .copied()
            .ok_or_else(|| Error::UnknownTag(tag.as_str().to_string()))
    }

    fn push(&mut self, tag: KnowledgeTag, v: Option<Vec<f64>>) -> usize {
        let id = self.tags.len();
        self.position.insert(tag.clone(), id);
        self.tags.push(tag);
        self.vectors.push(v);
        self.parent.push(id);
        self.smallest.push(id);
        self.rep.push(id);
        id
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return;
        }
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[gone] = keep;
        let (sa, sb) = (self.smallest[keep], self.smallest[gone]);
        self.smallest[keep] = if self.tags[sa] <= self.tags[sb] { sa } else { sb };
    }

    fn refresh(&mut self) {
        for i in 0..self.tags.len() {
            let r = self.find(i);
            self.rep[i] = self.smallest[r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::MockEmbedder;
    use crate::error::ProviderError;

    fn tag(s: &str) -> KnowledgeTag {
        KnowledgeTag::new(s).unwrap()
    }

    /// Embedder with hand-placed unit vectors in the plane.
    struct AngleEmbedder(HashMap<String, f64>);

    impl Embedder for AngleEmbedder {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
            Ok(texts
                .iter()
                .map(|t| {
                    let a = self.0[t];
                    vec![a.cos(), a.sin()]
                })
                .collect())
        }
    }

    #[test]
    fn identical_strings_share_a_class() {
        let e = MockEmbedder::new(1);
        let t = tag("pdf_text_extraction");
        let idx = EquivalenceIndex::build([&t, &t], &e, 0.9).unwrap();
        assert_eq!(idx.len(), 1);
        assert!(idx.equivalent(&t, &t).unwrap());
    }

    #[test]
    fn delta_out_of_range_rejected() {
        assert!(EquivalenceIndex::new(1.0 + 1e-9).is_err());
        assert!(EquivalenceIndex::new(0.0).is_err());
        assert!(EquivalenceIndex::new(1.0).is_ok());
    }

    #[test]
    fn chains_close_transitively() {
        // cos(0.4) = 0.921 >= 0.9, cos(0.8) = 0.697 < 0.9
        let e = AngleEmbedder(HashMap::from([
            ("a".to_string(), 0.0),
            ("b".to_string(), 0.4),
            ("c".to_string(), 0.8),
            ("z".to_string(), 2.5),
        ]));
        let tags = [tag("a"), tag("b"), tag("c"), tag("z")];
        let idx = EquivalenceIndex::build(&tags, &e, 0.9).unwrap();
        assert!(idx.equivalent(&tags[0], &tags[2]).unwrap());
        assert_eq!(idx.class_of(&tags[2]).unwrap().as_str(), "a");
        assert_eq!(idx.class_of(&tags[3]).unwrap().as_str(), "z");
    }

    #[test]
    fn representative_is_smallest_member() {
        let mut idx = EquivalenceIndex::new(0.9).unwrap();
        for t in ["table_formatting", "latex_table_generation", "zeta"] {
            idx.insert_isolated(tag(t));
        }
        idx.merge(&tag("zeta"), &tag("table_formatting")).unwrap();
        idx.merge(&tag("table_formatting"), &tag("latex_table_generation")).unwrap();
        assert_eq!(idx.class_of(&tag("zeta")).unwrap().as_str(), "latex_table_generation");
        assert_eq!(idx.dump().len(), 3);
    }

    #[test]
    fn semantic_intersection_cases() {
        let mut idx = EquivalenceIndex::new(0.9).unwrap();
        for t in ["t1", "t1x", "t2", "t3"] {
            idx.insert_isolated(tag(t));
        }
        idx.merge(&tag("t1"), &tag("t1x")).unwrap();
        let a = TagSet::from_raw(["t1", "t2"]).unwrap();
        let b = TagSet::from_raw(["t1x", "t3"]).unwrap();
        assert_eq!(idx.semantic_intersection(&a, &b).unwrap(), 1);
        assert_eq!(idx.semantic_intersection(&b, &a).unwrap(), 1);
        assert_eq!(idx.semantic_intersection(&a, &a).unwrap(), 2);
        let c = TagSet::from_raw(["t3"]).unwrap();
        assert_eq!(idx.semantic_intersection(&a, &c).unwrap(), 0);
        let missing = TagSet::from_raw(["nope"]).unwrap();
        assert!(matches!(idx.semantic_intersection(&a, &missing), Err(Error::UnknownTag(_))));
    }

    #[test]
    fn unrelated_insert_keeps_memberships() {
        let e = MockEmbedder::new(9);
        let base: Vec<_> = ["table_formatting", "table_formattings", "video_editing", "audio_mixing"]
            .iter()
            .map(|s| tag(s))
            .collect();
        let mut idx = EquivalenceIndex::build(&base, &e, 0.85).unwrap();
        let before = idx.dump();
        idx.insert([&tag("quantum_chromodynamics")], &e).unwrap();
        let after = idx.dump();
        for (k, v) in &before {
            assert_eq!(after[k], *v);
        }
    }
}
