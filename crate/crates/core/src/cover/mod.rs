//! Source-skill selection: cover as many target classes as possible, then
//! introduce as few irrelevant classes as possible.
//!
//! All strategies first restrict to the coverable part of the target (classes
//! some skill provides). The remaining targets are reported as uncovered and
//! bypass selection.

mod bitset;
mod brute;
mod greedy;
mod lp;
mod primal_dual;
pub mod simplex;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Skill;
use crate::tags::{EquivalenceIndex, TagSet};

use bitset::BitSet;

pub use brute::{brute_force_select, BRUTE_FORCE_MAX_SKILLS};
pub use greedy::greedy_select;
pub use lp::{lp_round_select, LpCaps};
pub use primal_dual::primal_dual_select;

/// Class identifier: the representative tag string of an equivalence class.
pub type ClassId = String;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillClasses {
    pub id: String,
    pub classes: BTreeSet<ClassId>,
}

/// A selection problem. Skills are kept sorted by id, which is the tie-break order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct CoverInstance {
    targets: BTreeSet<ClassId>,
    skills: Vec<SkillClasses>,
}

/// On-disk shape: `{"targets": [..], "skills": {"id": [..]}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub targets: Vec<ClassId>,
    pub skills: BTreeMap<String, Vec<ClassId>>,
}

impl TryFrom<InstanceFile> for CoverInstance {
    type Error = Error;
    fn try_from(f: InstanceFile) -> Result<Self> {
        Ok(CoverInstance::new(
            f.targets,
            f.skills.into_iter().map(|(id, c)| (id, c.into_iter().collect())),
        ))
    }
}

impl From<CoverInstance> for InstanceFile {
    fn from(i: CoverInstance) -> Self {
        InstanceFile {
            targets: i.targets.into_iter().collect(),
            skills: i
                .skills
                .into_iter()
                .map(|s| (s.id, s.classes.into_iter().collect()))
                .collect(),
        }
    }
}

impl CoverInstance {
    /// Builds an instance; duplicate skill ids keep the last class set.
    pub fn new<S, C>(targets: impl IntoIterator<Item = C>, skills: impl IntoIterator<Item = (S, BTreeSet<ClassId>)>) -> Self
    where
        S: Into<String>,
        C: Into<ClassId>,
    {
        let map: BTreeMap<String, BTreeSet<ClassId>> =
            skills.into_iter().map(|(id, c)| (id.into(), c)).collect();
        Self {
            targets: targets.into_iter().map(Into::into).collect(),
            skills: map
                .into_iter()
                .map(|(id, classes)| SkillClasses { id, classes })
                .collect(),
        }
    }

    /// Canonicalizes the target and every skill's tags through `index`.
    pub fn from_skills(target: &TagSet, skills: &[Skill], index: &EquivalenceIndex) -> Result<Self> {
        let to_ids = |t: &TagSet| -> Result<BTreeSet<ClassId>> {
            Ok(index.canonical(t)?.into_iter().map(String::from).collect())
        };
        let targets = to_ids(target)?;
        let skills = skills
            .iter()
            .map(|s| Ok((s.id.clone(), to_ids(&s.tags)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(targets, skills))
    }

    pub fn targets(&self) -> &BTreeSet<ClassId> {
        &self.targets
    }

    pub fn skills(&self) -> &[SkillClasses] {
        &self.skills
    }

    /// Target classes that at least one skill provides.
    pub fn coverable(&self) -> BTreeSet<ClassId> {
        self.skills
            .iter()
            .flat_map(|s| s.classes.intersection(&self.targets))
            .cloned()
            .collect()
    }

    fn position(&self, id: &str) -> Result<usize> {
        self.skills
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .map_err(|_| Error::Input(format!("skill {id:?} is not part of the instance")))
    }

    /// Builds the result for skills given by index, in the given order.
    fn result_for(&self, selected: &[usize]) -> SelectionResult {
        let mut union: BTreeSet<&ClassId> = BTreeSet::new();
        for &i in selected {
            union.extend(self.skills[i].classes.iter());
        }
        let covered: BTreeSet<ClassId> = self.targets.iter().filter(|t| union.contains(t)).cloned().collect();
        SelectionResult {
            selected: selected.iter().map(|&i| self.skills[i].id.clone()).collect(),
            uncovered: self.targets.difference(&covered).cloned().collect(),
            irrelevant_count: union.iter().filter(|c| !self.targets.contains(**c)).count(),
            covered,
        }
    }

    /// Bitset view over a dense class numbering: targets first.
    fn dense(&self) -> Dense {
        let mut ids: BTreeMap<&ClassId, usize> = BTreeMap::new();
        for t in &self.targets {
            let n = ids.len();
            ids.entry(t).or_insert(n);
        }
        for s in &self.skills {
            for c in &s.classes {
                let n = ids.len();
                ids.entry(c).or_insert(n);
            }
        }
        let n = ids.len();
        let n_targets = self.targets.len();
        let mut target_mask = BitSet::new(n);
        (0..n_targets).for_each(|i| target_mask.insert(i));
        let skills = self
            .skills
            .iter()
            .map(|s| {
                let mut b = BitSet::new(n);
                s.classes.iter().for_each(|c| b.insert(ids[c]));
                b
            })
            .collect();
        Dense {
            target_mask,
            skills,
        }
    }
}

struct Dense {
    target_mask: BitSet,
    skills: Vec<BitSet>,
}

impl Dense {
    fn target_part(&self, i: usize) -> BitSet {
        self.skills[i].and(&self.target_mask)
    }

    fn irrelevant_part(&self, i: usize) -> BitSet {
        self.skills[i].and_not(&self.target_mask)
    }

    fn coverable(&self) -> BitSet {
        let mut all = BitSet::new(self.target_mask.capacity());
        for s in &self.skills {
            all.union_with(s);
        }
        all.and(&self.target_mask)
    }

    fn coverage_of(&self, selected: &[usize]) -> BitSet {
        let mut c = BitSet::new(self.target_mask.capacity());
        for &i in selected {
            c.union_with(&self.skills[i]);
        }
        c.and(&self.target_mask)
    }

    /// Greedy extension of `selected` until no skill adds target coverage.
    /// Picks by (new targets desc, new irrelevant asc, index asc).
    fn greedy_extend(&self, selected: &mut Vec<usize>) {
        let mut covered = self.coverage_of(selected);
        let mut introduced = BitSet::new(self.target_mask.capacity());
        for &i in selected.iter() {
            introduced.union_with(&self.irrelevant_part(i));
        }
        loop {
            let mut best: Option<(usize, usize, usize)> = None;
            for i in 0..self.skills.len() {
                if selected.contains(&i) {
                    continue;
                }
                let gain = self.target_part(i).and_not(&covered).count();
                if gain == 0 {
                    continue;
                }
                let new_irr = self.irrelevant_part(i).and_not(&introduced).count();
                let better = match best {
                    None => true,
                    Some((_, g, r)) => gain > g || (gain == g && new_irr < r),
                };
                if better {
                    best = Some((i, gain, new_irr));
                }
            }
            let Some((i, _, _)) = best else { break };
            selected.push(i);
            covered.union_with(&self.target_part(i));
            introduced.union_with(&self.irrelevant_part(i));
        }
    }

    /// Drops, scanning from the most recent addition, every skill whose
    /// removal leaves target coverage unchanged.
    fn prune(&self, selected: &[usize]) -> Vec<usize> {
        let full = self.coverage_of(selected);
        let mut keep: Vec<usize> = selected.to_vec();
        for pos in (0..keep.len()).rev() {
            let without: Vec<usize> = keep.iter().enumerate().filter(|(p, _)| *p != pos).map(|(_, &i)| i).collect();
            if self.coverage_of(&without) == full {
                keep.remove(pos);
            }
        }
        keep
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected skill ids in order of addition.
    pub selected: Vec<String>,
    pub covered: BTreeSet<ClassId>,
    pub uncovered: BTreeSet<ClassId>,
    /// Classes of the selected skills that are not targets.
    pub irrelevant_count: usize,
}

impl SelectionResult {
    pub fn empty(targets: &BTreeSet<ClassId>) -> Self {
        Self {
            selected: Vec::new(),
            covered: BTreeSet::new(),
            uncovered: targets.clone(),
            irrelevant_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Greedy,
    PrimalDual,
    LpRound,
    BruteForce,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Greedy,
        Strategy::PrimalDual,
        Strategy::LpRound,
        Strategy::BruteForce,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::PrimalDual => "primal_dual",
            Strategy::LpRound => "lp_round",
            Strategy::BruteForce => "brute_force",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "greedy" => Ok(Strategy::Greedy),
            "primal_dual" => Ok(Strategy::PrimalDual),
            "lp_round" | "lp" => Ok(Strategy::LpRound),
            "brute_force" | "brute" => Ok(Strategy::BruteForce),
            other => Err(Error::Config(format!(
                "unknown selection strategy {other:?} (expected greedy, primal_dual, lp_round or brute_force)"
            ))),
        }
    }
}

pub fn select_sources(instance: &CoverInstance, strategy: Strategy) -> Result<SelectionResult> {
    match strategy {
        Strategy::Greedy => Ok(greedy_select(instance)),
        Strategy::PrimalDual => Ok(primal_dual_select(instance)),
        Strategy::LpRound => lp_round_select(instance, &LpCaps::default()),
        Strategy::BruteForce => brute_force_select(instance),
    }
}

/// Removes redundant skills from `selection` (see [`Dense::prune`]).
pub fn prune_redundant(instance: &CoverInstance, selection: &[String]) -> Result<Vec<String>> {
    let idx = selection
        .iter()
        .map(|id| instance.position(id))
        .collect::<Result<Vec<_>>>()?;
    Ok(instance
        .dense()
        .prune(&idx)
        .into_iter()
        .map(|i| instance.skills[i].id.clone())
        .collect())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use rand::{Rng, SeedableRng};

    pub fn set(items: &[&str]) -> BTreeSet<ClassId> {
        items.iter().map(|s| s.to_string()).collect()
    }

    /// target {t1,t2,t3}; s1 -> {t1,t2}, s2 -> {t2,t3,u1}, s3 -> {t3}
    pub fn three_skill() -> CoverInstance {
        CoverInstance::new(
            ["t1", "t2", "t3"],
            [
                ("s1", set(&["t1", "t2"])),
                ("s2", set(&["t2", "t3", "u1"])),
                ("s3", set(&["t3"])),
            ],
        )
    }

    pub fn random_instance(seed: u64, max_skills: usize, max_targets: usize) -> CoverInstance {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n_targets = rng.random_range(0..=max_targets);
        let n_irr = rng.random_range(0..=6);
        let n_skills = rng.random_range(0..=max_skills);
        let targets: Vec<String> = (0..n_targets).map(|i| format!("t{i}")).collect();
        let irr: Vec<String> = (0..n_irr).map(|i| format!("u{i}")).collect();
        let skills: Vec<(String, BTreeSet<ClassId>)> = (0..n_skills)
            .map(|s| {
                let mut classes = BTreeSet::new();
                for t in &targets {
                    if rng.random_bool(0.3) {
                        classes.insert(t.clone());
                    }
                }
                for u in &irr {
                    if rng.random_bool(0.25) {
                        classes.insert(u.clone());
                    }
                }
                (format!("s{s:02}"), classes)
            })
            .collect();
        CoverInstance::new(targets, skills)
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn empty_target() {
        let inst = CoverInstance::new(Vec::<String>::new(), [("s1", set(&["a"]))]);
        for s in Strategy::ALL {
            let r = select_sources(&inst, s).unwrap();
            assert!(r.selected.is_empty() && r.covered.is_empty() && r.uncovered.is_empty());
            assert_eq!(r.irrelevant_count, 0);
        }
    }

    #[test]
    fn empty_library() {
        let inst = CoverInstance::new(["t1", "t2"], Vec::<(String, BTreeSet<ClassId>)>::new());
        for s in Strategy::ALL {
            let r = select_sources(&inst, s).unwrap();
            assert!(r.selected.is_empty());
            assert_eq!(r.uncovered, set(&["t1", "t2"]));
        }
    }

    #[test]
    fn three_skill_instance_all_strategies() {
        let inst = three_skill();
        for s in Strategy::ALL {
            let r = select_sources(&inst, s).unwrap();
            assert_eq!(r.covered, set(&["t1", "t2", "t3"]), "{s}");
            assert!(r.uncovered.is_empty());
            assert_eq!(r.irrelevant_count, 0, "{s}");
        }
        assert_eq!(greedy_select(&inst).selected, ["s1", "s3"]);
    }

    #[test]
    fn unknown_strategy_is_config_error() {
        assert!(matches!("simulated_annealing".parse::<Strategy>(), Err(Error::Config(_))));
        assert_eq!("primal-dual".parse::<Strategy>().unwrap(), Strategy::PrimalDual);
    }

    #[test]
    fn prune_drops_subsumed_skill() {
        let inst = CoverInstance::new(
            ["a", "b"],
            [("s_all", set(&["a", "b"])), ("s_sub", set(&["a"]))],
        );
        let pruned = prune_redundant(&inst, &["s_all".into(), "s_sub".into()]).unwrap();
        assert_eq!(pruned, ["s_all"]);
        let minimal = prune_redundant(&inst, &["s_all".into()]).unwrap();
        assert_eq!(minimal, ["s_all"]);
        assert!(prune_redundant(&inst, &["nope".into()]).is_err());
    }

    #[test]
    fn prune_preserves_coverage_on_random_instances() {
        for seed in 0..200 {
            let inst = random_instance(seed, 10, 8);
            let all: Vec<String> = inst.skills().iter().map(|s| s.id.clone()).collect();
            let pruned = prune_redundant(&inst, &all).unwrap();
            let d = inst.dense();
            let idx = |v: &[String]| v.iter().map(|id| inst.position(id).unwrap()).collect::<Vec<_>>();
            assert_eq!(d.coverage_of(&idx(&pruned)), d.coverage_of(&idx(&all)), "seed {seed}");
            let before = inst.result_for(&idx(&all));
            let after = inst.result_for(&idx(&pruned));
            assert!(after.irrelevant_count <= before.irrelevant_count);
        }
    }

    #[test]
    fn instance_file_round_trip() {
        let json = r#"{"targets":["t1","t2","t3"],"skills":{"s1":["t1","t2"],"s2":["t2","t3","u1"],"s3":["t3"]}}"#;
        let inst: CoverInstance = serde_json::from_str(json).unwrap();
        assert_eq!(inst, three_skill());
        assert_eq!(serde_json::to_string(&inst).unwrap(), json);
    }

    #[test]
    fn uncoverable_targets_are_reported() {
        let inst = CoverInstance::new(["a", "b", "zz"], [("s1", set(&["a"])), ("s2", set(&["b", "x"]))]);
        assert_eq!(inst.coverable(), set(&["a", "b"]));
        for s in Strategy::ALL {
            let r = select_sources(&inst, s).unwrap();
            assert_eq!(r.uncovered, set(&["zz"]));
            assert_eq!(r.irrelevant_count, 1);
        }
    }

    #[test]
    fn strategies_match_oracle_coverage_and_oracle_dominates() {
        for seed in 0..200 {
            let inst = random_instance(seed, 12, 10);
            let oracle = brute_force_select(&inst).unwrap();
            assert_eq!(oracle.covered, inst.coverable());
            for s in [Strategy::Greedy, Strategy::PrimalDual, Strategy::LpRound] {
                let r = select_sources(&inst, s).unwrap();
                assert_eq!(r.covered, oracle.covered, "seed {seed} {s}");
                assert!(oracle.irrelevant_count <= r.irrelevant_count, "seed {seed} {s}");
                assert_eq!(r, select_sources(&inst, s).unwrap());
                let uncovered: BTreeSet<_> = inst.targets().difference(&r.covered).cloned().collect();
                assert_eq!(r.uncovered, uncovered);
            }
        }
    }
}
