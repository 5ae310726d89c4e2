use crate::error::{Error, Result};

use super::{CoverInstance, SelectionResult};

pub const BRUTE_FORCE_MAX_SKILLS: usize = 20;

/// Exhaustive oracle: among subsets with maximum target coverage, one with the
/// fewest irrelevant classes, then the fewest skills, then the
/// lexicographically smallest id list.
///
/// Skills that cover no target can never improve a subset, so only skills
/// touching the target are enumerated; at most
/// [`BRUTE_FORCE_MAX_SKILLS`] of them are allowed.
pub fn brute_force_select(instance: &CoverInstance) -> Result<SelectionResult> {
    let dense = instance.dense();
    let relevant: Vec<usize> = (0..dense.skills.len())
        .filter(|&i| !dense.target_part(i).is_empty())
        .collect();
    if relevant.len() > BRUTE_FORCE_MAX_SKILLS {
        return Err(Error::Size(format!(
            "brute force enumerates at most {BRUTE_FORCE_MAX_SKILLS} target-covering skills, instance has {}",
            relevant.len()
        )));
    }
    let capacity = dense.target_mask.capacity();
    // Minimized key: (-coverage, irrelevant, size, indices). Skills are sorted
    // by id, so comparing ascending index lists compares id lists.
    let mut best: Option<(std::cmp::Reverse<usize>, usize, usize, Vec<usize>)> = None;
    for mask in 0u32..(1u32 << relevant.len()) {
        let subset: Vec<usize> = relevant
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &i)| i)
            .collect();
        let mut union = super::bitset::BitSet::new(capacity);
        for &i in &subset {
            union.union_with(&dense.skills[i]);
        }
        let key = (
            std::cmp::Reverse(union.and(&dense.target_mask).count()),
            union.and_not(&dense.target_mask).count(),
            subset.len(),
            subset,
        );
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
    }
    let (_, _, _, subset) = best.expect("the empty subset is always enumerated");
    Ok(instance.result_for(&subset))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::greedy_select;
    use super::*;

    #[test]
    fn three_skill_optimum() {
        let r = brute_force_select(&three_skill()).unwrap();
        assert_eq!(r.covered.len(), 3);
        assert_eq!(r.irrelevant_count, 0);
        assert_eq!(r.selected, ["s1", "s3"]);
    }

    #[test]
    fn single_skill_library() {
        let hit = CoverInstance::new(["a"], [("s", set(&["a", "x"]))]);
        assert_eq!(brute_force_select(&hit).unwrap().selected, ["s"]);
        let miss = CoverInstance::new(["a"], [("s", set(&["x"]))]);
        assert!(brute_force_select(&miss).unwrap().selected.is_empty());
    }

    #[test]
    fn too_many_skills() {
        let skills: Vec<_> = (0..21).map(|i| (format!("s{i:02}"), set(&["a"]))).collect();
        let inst = CoverInstance::new(["a"], skills);
        assert!(matches!(brute_force_select(&inst), Err(Error::Size(_))));
    }

    #[test]
    fn matches_greedy_coverage_on_random_instances() {
        for seed in 1000..1050 {
            let inst = random_instance(seed, 12, 8);
            let oracle = brute_force_select(&inst).unwrap();
            let g = greedy_select(&inst);
            assert_eq!(oracle.covered, g.covered);
            assert!(oracle.irrelevant_count <= g.irrelevant_count);
        }
    }

    #[test]
    fn prefers_fewer_skills_on_equal_irrelevance() {
        let inst = CoverInstance::new(
            ["a", "b"],
            [("s1", set(&["a"])), ("s2", set(&["b"])), ("s3", set(&["a", "b"]))],
        );
        assert_eq!(brute_force_select(&inst).unwrap().selected, ["s3"]);
    }
}
