use super::bitset::BitSet;
use super::{CoverInstance, SelectionResult};

const EPS: f64 = 1e-12;

/// Primal-dual covering.
///
/// Each skill costs `1 + (irrelevant classes it would newly introduce)`. Dual
/// variables of uncovered coverable targets rise uniformly until some skill's
/// dual sum reaches its cost; that skill is selected and its targets leave the
/// uncovered set. Costs are recomputed against the current selection, so they
/// can only fall; a skill already past its cost is taken at zero raise.
pub fn primal_dual_select(instance: &CoverInstance) -> SelectionResult {
    let dense = instance.dense();
    let n = dense.skills.len();
    let capacity = dense.target_mask.capacity();
    let mut uncovered = dense.coverable();
    let mut duals = vec![0.0f64; capacity];
    let mut introduced = BitSet::new(capacity);
    let mut selected: Vec<usize> = Vec::new();

    while !uncovered.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if selected.contains(&i) {
                continue;
            }
            let rate = dense.skills[i].and(&uncovered).count();
            if rate == 0 {
                continue;
            }
            let cost = 1.0 + dense.irrelevant_part(i).and_not(&introduced).count() as f64;
            let paid: f64 = dense.target_part(i).iter().map(|e| duals[e]).sum();
            let time = ((cost - paid) / rate as f64).max(0.0);
            if best.is_none_or(|(_, t)| time < t - EPS) {
                best = Some((i, time));
            }
        }
        let Some((pick, raise)) = best else { break };
        for e in uncovered.iter() {
            duals[e] += raise;
        }
        selected.push(pick);
        uncovered = uncovered.and_not(&dense.skills[pick]);
        introduced.union_with(&dense.irrelevant_part(pick));
    }
    instance.result_for(&dense.prune(&selected))
}
