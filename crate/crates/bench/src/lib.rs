//! Shared fixtures for the benchmarks.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skillforge::cover::CoverInstance;
use skillforge::harness::{SyntheticWorld, WorldConfig};
use skillforge::{Skill, SkillLibrary};

/// Seeded instance with `skills` skills over `targets` target and `targets / 2` irrelevant classes.
pub fn cover_instance(seed: u64, skills: usize, targets: usize) -> CoverInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target_ids: Vec<String> = (0..targets).map(|i| format!("t{i}")).collect();
    let irrelevant: Vec<String> = (0..targets / 2).map(|i| format!("u{i}")).collect();
    let skill_sets = (0..skills).map(|s| {
        let mut classes: BTreeSet<String> = target_ids.iter().filter(|_| rng.random_bool(0.2)).cloned().collect();
        classes.extend(irrelevant.iter().filter(|_| rng.random_bool(0.2)).cloned());
        (format!("s{s:04}"), classes)
    });
    CoverInstance::new(target_ids.clone(), skill_sets.collect::<Vec<_>>())
}

/// Library of `n` skills built from synthetic world tags, plus task queries.
pub fn library(n: usize) -> (SkillLibrary, Vec<String>) {
    let world = SyntheticWorld::generate(&WorldConfig {
        known_tags: n.max(1),
        n_tasks: 50,
        ..WorldConfig::default()
    })
    .expect("world generates");
    let skills: Vec<Skill> = world.initial_skills.clone();
    let queries = world.tasks.iter().map(|t| t.task.description.clone()).collect();
    (SkillLibrary::new(skills, 0).expect("unique ids"), queries)
}
