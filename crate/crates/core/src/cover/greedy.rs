use super::{CoverInstance, SelectionResult};

/// Repeatedly adds the skill with the most newly covered target classes,
/// breaking ties by fewer newly introduced irrelevant classes and then by id,
/// until no skill adds coverage; then prunes redundant picks.
pub fn greedy_select(instance: &CoverInstance) -> SelectionResult {
    let dense = instance.dense();
    let mut selected = Vec::new();
    dense.greedy_extend(&mut selected);
    instance.result_for(&dense.prune(&selected))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    #[test]
    fn single_covering_skill() {
        let inst = CoverInstance::new(["a", "b"], [("s1", set(&["a", "b"])), ("s2", set(&["a"]))]);
        assert_eq!(greedy_select(&inst).selected, ["s1"]);
    }

    #[test]
    fn tie_broken_by_fewer_irrelevant() {
        // s1 and s2 both add two targets first; s1 introduces nothing irrelevant.
        let r = greedy_select(&three_skill());
        assert_eq!(r.selected, ["s1", "s3"]);
        assert_eq!(r.irrelevant_count, 0);
    }

    #[test]
    fn identical_skills_pick_first() {
        let inst = CoverInstance::new(["a"], [("s_b", set(&["a"])), ("s_a", set(&["a"]))]);
        assert_eq!(greedy_select(&inst).selected, ["s_a"]);
    }
}
