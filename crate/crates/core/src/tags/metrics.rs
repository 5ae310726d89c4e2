use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{EquivalenceIndex, KnowledgeTag, TagSet};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Builds P/R/F1 from matched counts. Empty denominators give 0; F1 is 0 when P + R = 0.
    pub fn from_counts(pred_matched: usize, pred_total: usize, ref_matched: usize, ref_total: usize) -> Self {
        let ratio = |m: usize, n: usize| if n == 0 { 0.0 } else { m as f64 / n as f64 };
        let precision = ratio(pred_matched, pred_total);
        let recall = ratio(ref_matched, ref_total);
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TagQuality {
    pub exact: Prf,
    pub semantic: Prf,
}

/// Exact (normalized string) and semantic (equivalence class) P/R/F1.
///
/// Semantic precision is the fraction of predicted tags whose class occurs in
/// the reference; semantic recall the fraction of reference tags whose class
/// occurs in the prediction. An exact match is always a class match, so every
/// semantic figure dominates its exact counterpart. Tags missing from the
/// index are their own singleton class.
pub fn tag_quality_metrics(predicted: &TagSet, reference: &TagSet, index: &EquivalenceIndex) -> TagQuality {
    let exact = Prf::from_counts(
        predicted.iter().filter(|t| reference.contains(t)).count(),
        predicted.len(),
        reference.iter().filter(|t| predicted.contains(t)).count(),
        reference.len(),
    );
    TagQuality {
        exact,
        semantic: semantic_prf(predicted, reference, |t| index.class_or_self(t).clone()),
    }
}

/// Semantic P/R/F1 under an arbitrary class map.
pub(crate) fn semantic_prf(
    predicted: &TagSet,
    reference: &TagSet,
    class: impl Fn(&KnowledgeTag) -> KnowledgeTag,
) -> Prf {
    use std::collections::BTreeSet;
    let pc: BTreeSet<_> = predicted.iter().map(&class).collect();
    let rc: BTreeSet<_> = reference.iter().map(&class).collect();
    Prf::from_counts(
        predicted.iter().filter(|t| rc.contains(&class(t))).count(),
        predicted.len(),
        reference.iter().filter(|t| pc.contains(&class(t))).count(),
        reference.len(),
    )
}

/// Mean semantic F1 over all unordered pairs of runs.
pub fn self_consistency(runs: &[TagSet], index: &EquivalenceIndex) -> Result<f64> {
    if runs.len() < 2 {
        return Err(Error::Input(format!(
            "self-consistency needs at least 2 runs, got {}",
            runs.len()
        )));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            total += tag_quality_metrics(&runs[i], &runs[j], index).semantic.f1;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(tags: &[&str]) -> TagSet {
        TagSet::from_raw(tags).unwrap()
    }

    fn index(tags: &[&str], merges: &[(&str, &str)]) -> EquivalenceIndex {
        let mut idx = EquivalenceIndex::new(0.9).unwrap();
        for t in tags {
            idx.insert_isolated(KnowledgeTag::new(t).unwrap());
        }
        for (a, b) in merges {
            idx.merge(&KnowledgeTag::new(a).unwrap(), &KnowledgeTag::new(b).unwrap()).unwrap();
        }
        idx
    }

    #[test]
    fn identity_is_perfect() {
        let s = set(&["a", "b"]);
        let q = tag_quality_metrics(&s, &s, &index(&["a", "b"], &[]));
        for x in [q.exact, q.semantic] {
            assert_eq!((x.precision, x.recall, x.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn surface_variants_match_semantically() {
        let idx = index(
            &["latex_table_generation", "table_formatting"],
            &[("latex_table_generation", "table_formatting")],
        );
        let q = tag_quality_metrics(&set(&["latex_table_generation"]), &set(&["table_formatting"]), &idx);
        assert_eq!(q.exact.f1, 0.0);
        assert_eq!(q.semantic.f1, 1.0);
    }

    #[test]
    fn half_overlap() {
        let q = tag_quality_metrics(&set(&["a", "b"]), &set(&["b", "c"]), &index(&["a", "b", "c"], &[]));
        assert_eq!(q.exact.precision, 0.5);
        assert_eq!(q.exact.recall, 0.5);
        assert!((q.exact.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_sets_give_zero() {
        let q = tag_quality_metrics(&set(&[]), &set(&["a"]), &index(&["a"], &[]));
        assert_eq!(q.exact, Prf::default());
    }

    /// Pairwise F1 from the definition, by explicit set counting.
    fn oracle_f1(a: &[&str], b: &[&str]) -> f64 {
        let inter = a.iter().filter(|x| b.contains(x)).count() as f64;
        if inter == 0.0 {
            return 0.0;
        }
        let p = inter / a.len() as f64;
        let r = inter / b.len() as f64;
        2.0 * p * r / (p + r)
    }

    #[test]
    fn self_consistency_cases() {
        let idx = index(&["a", "b", "c", "d"], &[]);
        let same = vec![set(&["a", "b"]); 3];
        assert_eq!(self_consistency(&same, &idx).unwrap(), 1.0);
        assert_eq!(self_consistency(&[set(&["a"]), set(&["c", "d"])], &idx).unwrap(), 0.0);

        let runs: [&[&str]; 3] = [&["a", "b"], &["a", "b"], &["a"]];
        let expected =
            (oracle_f1(runs[0], runs[1]) + oracle_f1(runs[0], runs[2]) + oracle_f1(runs[1], runs[2])) / 3.0;
        // (1 + 2/3 + 2/3) / 3
        assert!((expected - 7.0 / 9.0).abs() < 1e-12);
        let got = self_consistency(&runs.map(set), &idx).unwrap();
        assert!((got - expected).abs() < 1e-9);

        assert!(matches!(self_consistency(&[set(&["a"])], &idx), Err(Error::Input(_))));
    }

    proptest! {
        #[test]
        fn semantic_dominates_exact(
            pred in proptest::collection::btree_set(0usize..8, 0..6),
            refr in proptest::collection::btree_set(0usize..8, 0..6),
            merges in proptest::collection::vec((0usize..8, 0usize..8), 0..5),
        ) {
            let names: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
            let mut idx = EquivalenceIndex::new(0.9).unwrap();
            for n in &names { idx.insert_isolated(KnowledgeTag::new(n).unwrap()); }
            for (a, b) in merges {
                idx.merge(&KnowledgeTag::new(&names[a]).unwrap(), &KnowledgeTag::new(&names[b]).unwrap()).unwrap();
            }
            let p = TagSet::from_raw(pred.iter().map(|i| &names[*i])).unwrap();
            let r = TagSet::from_raw(refr.iter().map(|i| &names[*i])).unwrap();
            let q = tag_quality_metrics(&p, &r, &idx);
            prop_assert!(q.semantic.precision >= q.exact.precision);
            prop_assert!(q.semantic.recall >= q.exact.recall);
            prop_assert!(q.semantic.f1 >= q.exact.f1);
        }
    }
}
