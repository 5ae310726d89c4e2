//! Seeded synthetic task world.
//!
//! Tags are pairs of pseudo-words. Known tags each get one human skill; novel
//! tags are covered by no initial skill. Coverable tasks need only known tags,
//! the rest need one novel tag plus one or two known ones. Task descriptions
//! spell out their tags so BM25 can find the matching skills. Distractor tags
//! reuse the words of real tags, so BM25 cannot tell them apart from the real
//! ones.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::hash_parts;
use crate::model::{Skill, Task};
use crate::prompts;
use crate::providers::{ChatModel, ChatRequest};
use crate::tags::{KnowledgeTag, TagSet};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const DISTRACTORS_PER_TAG: usize = 2;

const OBJECTS: &[&str] = &[
    "quarterly ledger",
    "field survey",
    "intake form",
    "supply roster",
    "audit bundle",
    "lab notebook",
    "grant proposal",
    "shipping manifest",
];
const TEAMS: &[&str] = &["harbor", "summit", "orchard", "granite", "meadow", "canyon"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Prefix of task ids.
    pub name: String,
    pub seed: u64,
    pub n_tasks: usize,
    pub coverable_fraction: f64,
    pub known_tags: usize,
    pub novel_tags: usize,
    pub coverage_threshold: f64,
    /// Start of this world's window into the shared tag pool. Two worlds with
    /// the same seed and windows offset by 70% of the tag count share 30% of
    /// their tags.
    pub tag_offset: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            name: "a".into(),
            seed: 0,
            n_tasks: 50,
            coverable_fraction: 0.4,
            known_tags: 20,
            novel_tags: 10,
            coverage_threshold: 1.0,
            tag_offset: 0,
        }
    }
}

impl WorldConfig {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// A second world sharing `overlap` of this world's tags.
    pub fn shifted(&self, name: &str, overlap: f64) -> Self {
        let total = self.known_tags + self.novel_tags;
        let shift = ((1.0 - overlap) * total as f64).round() as usize;
        Self {
            name: name.into(),
            tag_offset: self.tag_offset + shift,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldTask {
    pub task: Task,
    /// Hidden ground truth: the tags a solution needs.
    pub required: TagSet,
    pub coverable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub tag_universe: Vec<KnowledgeTag>,
    pub known: Vec<KnowledgeTag>,
    pub novel: Vec<KnowledgeTag>,
    /// Wrong tags built from the words of real ones.
    pub distractors: Vec<KnowledgeTag>,
    pub tasks: Vec<WorldTask>,
    pub initial_skills: Vec<Skill>,
    pub coverage_threshold: f64,
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let mut pick = |set: &[u8]| set[rng.random_range(0..set.len())] as char;
    [pick(CONSONANTS), pick(VOWELS), pick(CONSONANTS), pick(CONSONANTS), pick(VOWELS)]
        .iter()
        .collect()
}

/// The first `n` tags of the pool for `seed`; every word is unique.
fn tag_pool(seed: u64, n: usize) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(hash_parts(seed, &["tag-pool"]));
    let mut seen = BTreeSet::new();
    let mut word = |rng: &mut ChaCha8Rng| loop {
        let w = pseudo_word(rng);
        if seen.insert(w.clone()) {
            return w;
        }
    };
    (0..n).map(|_| (word(&mut rng), word(&mut rng))).collect()
}

fn join_phrases(phrases: &[String]) -> String {
    match phrases {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn skill_for(id: String, tag: &KnowledgeTag) -> Skill {
    let p = tag.phrase();
    Skill::human(
        id,
        format!("{p} guide"),
        format!("How to handle {p} work."),
        format!(
            "1. Identify the {p} inputs.\n2. Apply the standard {p} steps.\n3. Check the {p} result before handing it over."
        ),
    )
}

impl SyntheticWorld {
    pub fn generate(config: &WorldConfig) -> Result<Self> {
        let total = config.known_tags + config.novel_tags;
        if config.n_tasks == 0 || total == 0 {
            return Err(Error::Config("world needs at least one task and one tag".into()));
        }
        if !(0.0..=1.0).contains(&config.coverable_fraction) || !(0.0..=1.0).contains(&config.coverage_threshold) {
            return Err(Error::Config("world fractions must lie in [0, 1]".into()));
        }
        let n_coverable = (config.coverable_fraction * config.n_tasks as f64).round() as usize;
        if n_coverable > 0 && config.known_tags == 0 {
            return Err(Error::Config("coverable tasks need known tags".into()));
        }
        if n_coverable < config.n_tasks && config.novel_tags == 0 {
            return Err(Error::Config("uncoverable tasks need novel tags".into()));
        }
        let pool = tag_pool(config.seed, config.tag_offset + total);
        let words = &pool[config.tag_offset..];
        let tags: Vec<KnowledgeTag> = words
            .iter()
            .map(|(a, b)| KnowledgeTag::new(&format!("{a}_{b}")))
            .collect::<Result<_>>()?;

        let mut rng = ChaCha8Rng::seed_from_u64(hash_parts(config.seed, &["world", &config.name]));
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut rng);
        let known: Vec<KnowledgeTag> = order[..config.known_tags].iter().map(|&i| tags[i].clone()).collect();
        let novel: Vec<KnowledgeTag> = order[config.known_tags..].iter().map(|&i| tags[i].clone()).collect();

        // Near misses: each tag's words reversed, plus words crossed between tags.
        let real: BTreeSet<&KnowledgeTag> = tags.iter().collect();
        let mut distractors: BTreeSet<KnowledgeTag> =
            words.iter().map(|(a, b)| KnowledgeTag::new(&format!("{b}_{a}"))).collect::<Result<_>>()?;
        for (i, (first, _)) in words.iter().enumerate() {
            let mut made = 0;
            let mut attempts = 0;
            while made < DISTRACTORS_PER_TAG.min(total - 1) && attempts < 8 * total {
                attempts += 1;
                let j = rng.random_range(0..total);
                if j == i {
                    continue;
                }
                let d = KnowledgeTag::new(&format!("{first}_{}", words[j].1))?;
                if !real.contains(&d) && distractors.insert(d) {
                    made += 1;
                }
            }
        }

        let mut tasks = Vec::with_capacity(config.n_tasks);
        for t in 0..config.n_tasks {
            let coverable = t < n_coverable;
            let mut required = TagSet::new();
            if coverable {
                let n = rng.random_range(1..=3usize.min(known.len()));
                while required.len() < n {
                    required.insert(known[rng.random_range(0..known.len())].clone());
                }
            } else {
                required.insert(novel[(t - n_coverable) % novel.len()].clone());
                let n = if known.is_empty() { 0 } else { rng.random_range(1..=2usize.min(known.len())) };
                while required.len() < n + 1 {
                    required.insert(known[rng.random_range(0..known.len())].clone());
                }
            }
            let mut phrases: Vec<String> = required.iter().map(KnowledgeTag::phrase).collect();
            phrases.shuffle(&mut rng);
            let description = format!(
                "Prepare the {} for the {} team. The work calls for {}.",
                OBJECTS[rng.random_range(0..OBJECTS.len())],
                TEAMS[rng.random_range(0..TEAMS.len())],
                join_phrases(&phrases)
            );
            let mut task = Task::new(format!("{}-t{t:02}", config.name), description)?;
            task.metadata.insert("world".into(), config.name.clone());
            tasks.push(WorldTask {
                task,
                required,
                coverable,
            });
        }

        // Ids follow the pool position so worlds sharing a tag share its skill.
        let initial_skills = known
            .iter()
            .map(|t| {
                let pos = tags.iter().position(|x| x == t).expect("known tag is in the universe");
                skill_for(format!("h{:03}", config.tag_offset + pos), t)
            })
            .collect();

        Ok(Self {
            config: config.clone(),
            tag_universe: tags,
            known,
            novel,
            distractors: distractors.into_iter().collect(),
            tasks,
            initial_skills,
            coverage_threshold: config.coverage_threshold,
        })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn task(&self, id: &str) -> Option<&WorldTask> {
        self.tasks.iter().find(|t| t.task.id == id)
    }

    /// A copy named `name` whose task descriptions are rewritten by `chat`.
    /// Hidden tags and initial skills are unchanged, so evolving on `self`
    /// and evaluating on the copy measures robustness to rewording.
    pub fn paraphrased(&self, name: &str, chat: &dyn ChatModel) -> Result<Self> {
        let tasks = self
            .tasks
            .par_iter()
            .map(|t| {
                let text = chat.complete(&ChatRequest::new(prompts::PARAPHRASE_SYSTEM, t.task.description.as_str()))?.text;
                let mut task = Task::new(t.task.id.clone(), text.trim())?;
                task.metadata = t.task.metadata.clone();
                Ok(WorldTask { task, ..t.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut config = self.config.clone();
        config.name = name.into();
        Ok(Self {
            config,
            tasks,
            ..self.clone()
        })
    }

    /// A seeded `label_scale` fraction of the initial skills, sorted by id.
    pub fn labeled_skills(&self, label_scale: f64, seed: u64) -> Vec<Skill> {
        let keep = (label_scale * self.initial_skills.len() as f64).round() as usize;
        let mut skills = self.initial_skills.clone();
        skills.sort_by_key(|s| hash_parts(seed, &["label", &s.id]));
        skills.truncate(keep);
        skills.sort_by(|a, b| a.id.cmp(&b.id));
        skills
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = SyntheticWorld::generate(&WorldConfig::seeded(3)).unwrap();
        let b = SyntheticWorld::generate(&WorldConfig::seeded(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, SyntheticWorld::generate(&WorldConfig::seeded(4)).unwrap());
    }

    #[test]
    fn mock_paraphrase_keeps_tasks() {
        let w = SyntheticWorld::generate(&WorldConfig::default()).unwrap();
        let p = w.paraphrased("a-para", &crate::providers::MockChat::new(0)).unwrap();
        assert_eq!(p.name(), "a-para");
        assert_eq!(p.tasks, w.tasks);
    }

    #[test]
    fn shape() {
        let w = SyntheticWorld::generate(&WorldConfig::default()).unwrap();
        assert_eq!(w.tasks.len(), 50);
        assert_eq!(w.tasks.iter().filter(|t| t.coverable).count(), 20);
        assert_eq!(w.initial_skills.len(), 20);
        let universe: BTreeSet<_> = w.tag_universe.iter().collect();
        for t in &w.tasks {
            assert!(t.required.iter().all(|r| universe.contains(r)));
            assert!(t.required.iter().all(|r| t.task.description.contains(&r.phrase())));
            let novel = t.required.iter().filter(|r| w.novel.contains(r)).count();
            assert_eq!(novel, usize::from(!t.coverable));
        }
        assert!(w.distractors.iter().all(|d| !universe.contains(d)));
    }

    #[test]
    fn shifted_world_overlaps_by_thirty_percent() {
        let a_cfg = WorldConfig::seeded(9);
        let a = SyntheticWorld::generate(&a_cfg).unwrap();
        let b = SyntheticWorld::generate(&a_cfg.shifted("b", 0.3)).unwrap();
        let sa: BTreeSet<_> = a.tag_universe.iter().collect();
        let shared = b.tag_universe.iter().filter(|t| sa.contains(t)).count();
        assert_eq!(shared, 9);
        assert!(b.tasks[0].task.id.starts_with("b-"));
    }

    #[test]
    fn label_scale_keeps_fraction() {
        let w = SyntheticWorld::generate(&WorldConfig::default()).unwrap();
        assert_eq!(w.labeled_skills(0.0, 1).len(), 0);
        assert_eq!(w.labeled_skills(0.25, 1).len(), 5);
        assert_eq!(w.labeled_skills(1.0, 1).len(), 20);
        let half: BTreeSet<_> = w.labeled_skills(0.5, 1).into_iter().map(|s| s.id).collect();
        let more: BTreeSet<_> = w.labeled_skills(0.75, 1).into_iter().map(|s| s.id).collect();
        assert!(half.is_subset(&more));
    }

    #[test]
    fn rejects_impossible_worlds() {
        let cfg = WorldConfig {
            novel_tags: 0,
            ..WorldConfig::default()
        };
        assert!(SyntheticWorld::generate(&cfg).is_err());
    }
}
