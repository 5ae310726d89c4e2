use crate::error::{Error, Result};

use super::simplex::{minimize, Constraint, Relation};
use super::{CoverInstance, SelectionResult};

/// Size limits for the dense LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpCaps {
    pub max_skills: usize,
    pub max_classes: usize,
}

impl Default for LpCaps {
    fn default() -> Self {
        Self {
            max_skills: 500,
            max_classes: 500,
        }
    }
}

pub(crate) const ROUND_THRESHOLD: f64 = 0.5;

/// LP relaxation with rounding and greedy repair.
///
/// Variables: `x_i >= 0` per target-touching skill and `z_u` per irrelevant
/// class. Minimize `sum z_u + eps * sum x_i` subject to every coverable
/// target being covered fractionally at least once and `z_u >= x_i` whenever
/// skill `i` carries class `u`. The `eps` term (below one irrelevant class in
/// total) only breaks ties toward fewer skills. It also makes `x_i <= 1`
/// redundant: any `x_i > 1` can be lowered to 1 at strictly lower cost.
/// Skills with `x_i >= 0.5` are selected, a greedy pass covers whatever the
/// rounding missed, and redundant picks are pruned.
pub fn lp_round_select(instance: &CoverInstance, caps: &LpCaps) -> Result<SelectionResult> {
    let dense = instance.dense();
    let n_classes = dense.target_mask.capacity();
    if dense.skills.len() > caps.max_skills || n_classes > caps.max_classes {
        return Err(Error::Size(format!(
            "LP relaxation is capped at {} skills and {} classes (instance: {} and {}); use the greedy strategy",
            caps.max_skills,
            caps.max_classes,
            dense.skills.len(),
            n_classes
        )));
    }
    let fractional = solve_relaxation(&dense)?;
    let mut selected: Vec<usize> = fractional
        .iter()
        .filter(|(_, x)| *x >= ROUND_THRESHOLD - 1e-9)
        .map(|(i, _)| *i)
        .collect();
    dense.greedy_extend(&mut selected);
    Ok(instance.result_for(&dense.prune(&selected)))
}

/// Returns `(skill index, x_i)` for every target-touching skill.
pub(crate) fn solve_relaxation(dense: &super::Dense) -> Result<Vec<(usize, f64)>> {
    let coverable = dense.coverable();
    if coverable.is_empty() {
        return Ok(Vec::new());
    }
    let skills: Vec<usize> = (0..dense.skills.len())
        .filter(|&i| !dense.target_part(i).is_empty())
        .collect();
    let mut irrelevant: Vec<usize> = Vec::new();
    for &i in &skills {
        for u in dense.irrelevant_part(i).iter() {
            if !irrelevant.contains(&u) {
                irrelevant.push(u);
            }
        }
    }
    irrelevant.sort_unstable();
    let nx = skills.len();
    let nv = nx + irrelevant.len();
    let eps = 1.0 / (2.0 * (nx as f64 + 1.0));
    let mut c = vec![eps; nx];
    c.extend(std::iter::repeat_n(1.0, irrelevant.len()));

    let mut rows = Vec::new();
    for e in coverable.iter() {
        let mut a = vec![0.0; nv];
        for (k, &i) in skills.iter().enumerate() {
            if dense.skills[i].contains(e) {
                a[k] = 1.0;
            }
        }
        rows.push(Constraint::new(a, Relation::Ge, 1.0));
    }
    for (k, &i) in skills.iter().enumerate() {
        for u in dense.irrelevant_part(i).iter() {
            let zu = nx + irrelevant.binary_search(&u).expect("collected above");
            let mut a = vec![0.0; nv];
            a[k] = 1.0;
            a[zu] = -1.0;
            rows.push(Constraint::new(a, Relation::Le, 0.0));
        }
    }
    let sol = minimize(&c, &rows).map_err(|e| Error::Input(format!("selection LP failed: {e}")))?;
    Ok(skills.into_iter().zip(sol.x).collect())
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{brute_force_select, CoverInstance};
    use super::*;

    #[test]
    fn integral_optimum_matches_oracle() {
        let inst = three_skill();
        let x = solve_relaxation(&inst.dense()).unwrap();
        for (_, v) in &x {
            assert!(v.abs() < 1e-9 || (v - 1.0).abs() < 1e-9, "fractional {v}");
        }
        let r = lp_round_select(&inst, &LpCaps::default()).unwrap();
        assert_eq!(r, brute_force_select(&inst).unwrap());
    }

    #[test]
    fn fractional_thirds_are_repaired() {
        // Three symmetric skills sharing one irrelevant class: the unique LP
        // optimum is x_i = 1/3, which rounds every skill to 0.
        let inst = CoverInstance::new(
            ["t"],
            [("s1", set(&["t", "u"])), ("s2", set(&["t", "u"])), ("s3", set(&["t", "u"]))],
        );
        let x = solve_relaxation(&inst.dense()).unwrap();
        for (_, v) in &x {
            assert!((v - 1.0 / 3.0).abs() < 1e-9, "expected 1/3, got {v}");
        }
        let r = lp_round_select(&inst, &LpCaps::default()).unwrap();
        assert_eq!(r.covered, set(&["t"]));
        assert_eq!(r.selected, ["s1"]);
    }

    #[test]
    fn empty_target_selects_nothing() {
        let inst = CoverInstance::new(Vec::<String>::new(), [("s1", set(&["a"]))]);
        assert!(lp_round_select(&inst, &LpCaps::default()).unwrap().selected.is_empty());
    }

    #[test]
    fn over_cap_is_size_error() {
        let caps = LpCaps { max_skills: 2, max_classes: 500 };
        let inst = three_skill();
        assert!(matches!(lp_round_select(&inst, &caps), Err(Error::Size(_))));
    }
}
