//! Candidate filtering by knowledge coverage and task alignment.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::CandidateSkill;
use crate::model::{SkillLibrary, Task};
use crate::providers::LikelihoodScorer;
use crate::tags::metrics::semantic_prf;
use crate::tags::{EquivalenceIndex, TagSet};

pub const DEFAULT_FILTER_RATIO: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub p_tag: f64,
    pub r_tag: f64,
    pub f_tag: f64,
    pub alignment: f64,
    pub combined: f64,
    pub cond_logprob: f64,
    pub uncond_logprob: f64,
    pub token_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub p_tag: f64,
    pub r_tag: f64,
    pub f_tag: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub alignment: f64,
    pub cond_logprob: f64,
    pub uncond_logprob: f64,
    pub token_count: u32,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Tag precision, recall and F1 of a candidate against its pair's target
/// tags, matching through equivalence classes.
///
/// An empty target leaves recall undefined; it is taken as 0 (so F1 is 0)
/// and logged.
pub fn knowledge_coverage(candidate_tags: &TagSet, target: &TagSet, index: &EquivalenceIndex) -> Result<Coverage> {
    if candidate_tags.is_empty() {
        return Err(Error::Input("candidate has no tags".into()));
    }
    for t in candidate_tags.iter().chain(target.iter()) {
        index.class_of(t)?;
    }
    if target.is_empty() {
        tracing::warn!("empty target tag set; recall treated as 0");
    }
    let prf = semantic_prf(candidate_tags, target, |t| index.class_or_self(t).clone());
    Ok(Coverage {
        p_tag: prf.precision,
        r_tag: prf.recall,
        f_tag: prf.f1,
    })
}

/// `sigmoid((log p(body | task) - log p(body)) / |body|)`, with `|body|` taken
/// from the conditional call.
pub fn alignment_score(body: &str, task: &Task, scorer: &dyn LikelihoodScorer) -> Result<Alignment> {
    if body.trim().is_empty() {
        return Err(Error::Input("candidate body is empty".into()));
    }
    let cond = scorer.score_likelihood(&task.description, body)?;
    let uncond = scorer.score_likelihood("", body)?;
    if cond.token_count != uncond.token_count {
        tracing::warn!(
            cond = cond.token_count,
            uncond = uncond.token_count,
            "token counts differ between conditional and unconditional scoring; using the conditional count"
        );
    }
    Ok(alignment_from(cond.sum_logprob, uncond.sum_logprob, cond.token_count))
}

pub fn alignment_from(cond_logprob: f64, uncond_logprob: f64, token_count: u32) -> Alignment {
    let per_token = (cond_logprob - uncond_logprob) / f64::from(token_count.max(1));
    Alignment {
        alignment: sigmoid(per_token),
        cond_logprob,
        uncond_logprob,
        token_count,
    }
}

/// Geometric mean of coverage F1 and alignment.
pub fn combined_score(f_tag: f64, alignment: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&f_tag) && (0.0..=1.0).contains(&alignment));
    (f_tag * alignment).sqrt()
}

pub fn score_record(coverage: Coverage, alignment: Alignment) -> ScoreRecord {
    ScoreRecord {
        p_tag: coverage.p_tag,
        r_tag: coverage.r_tag,
        f_tag: coverage.f_tag,
        alignment: alignment.alignment,
        combined: combined_score(coverage.f_tag, alignment.alignment),
        cond_logprob: alignment.cond_logprob,
        uncond_logprob: alignment.uncond_logprob,
        token_count: alignment.token_count,
    }
}

/// Scores one candidate: coverage against `target`, alignment against `task`.
pub fn score_candidate(
    candidate: &CandidateSkill,
    target: &TagSet,
    task: &Task,
    index: &EquivalenceIndex,
    scorer: &dyn LikelihoodScorer,
) -> Result<ScoreRecord> {
    let coverage = knowledge_coverage(&candidate.skill.tags, target, index)?;
    let alignment = alignment_score(&candidate.skill.body, task, scorer)?;
    Ok(score_record(coverage, alignment))
}

/// Number of candidates kept out of `n`: `max(1, floor(ratio * n + 0.5))`, or 0 when `n == 0`.
pub fn retained_count(n: usize, ratio: f64) -> usize {
    if n == 0 {
        return 0;
    }
    // The epsilon absorbs binary rounding of ratios such as 0.1.
    let k = (ratio * n as f64 + 0.5 + 1e-9).floor() as usize;
    k.clamp(1, n)
}

pub fn validate_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("filter ratio {ratio} must lie in (0, 1]")))
    }
}

/// Ranking order: combined desc, then f_tag desc, then candidate id asc.
pub fn rank_order(a: &CandidateSkill, b: &CandidateSkill) -> Ordering {
    let sa = a.scores.as_ref();
    let sb = b.scores.as_ref();
    let key = |s: Option<&ScoreRecord>| s.map_or((f64::NEG_INFINITY, f64::NEG_INFINITY), |s| (s.combined, s.f_tag));
    let (ca, fa) = key(sa);
    let (cb, fb) = key(sb);
    cb.total_cmp(&ca)
        .then_with(|| fb.total_cmp(&fa))
        .then_with(|| a.skill.id.cmp(&b.skill.id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub candidate_id: String,
    pub pair_id: String,
    pub p_tag: f64,
    pub r_tag: f64,
    pub f_tag: f64,
    pub alignment: f64,
    pub combined: f64,
    pub retained: bool,
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub library: SkillLibrary,
    pub retained: Vec<CandidateSkill>,
    /// One row per candidate, in rank order.
    pub rows: Vec<ScoreRow>,
}

/// Keeps the top-ranked candidates and adds them to the library.
///
/// The caller keeps the equivalence index in step: retained tags are already
/// registered because scoring needed them.
pub fn filter_and_update(
    mut candidates: Vec<CandidateSkill>,
    library: &SkillLibrary,
    ratio: f64,
) -> Result<FilterOutcome> {
    validate_ratio(ratio)?;
    if let Some(c) = candidates.iter().find(|c| c.scores.is_none()) {
        return Err(Error::Scoring(format!("candidate {} has not been scored", c.skill.id)));
    }
    candidates.sort_by(rank_order);
    let k = retained_count(candidates.len(), ratio);
    let rows = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let s = c.scores.expect("checked above");
            ScoreRow {
                candidate_id: c.skill.id.clone(),
                pair_id: c.source_pair_id.clone(),
                p_tag: s.p_tag,
                r_tag: s.r_tag,
                f_tag: s.f_tag,
                alignment: s.alignment,
                combined: s.combined,
                retained: i < k,
            }
        })
        .collect();
    candidates.truncate(k);
    let library = library.add_skills(candidates.iter().map(|c| c.skill.clone()))?;
    Ok(FilterOutcome {
        library,
        retained: candidates,
        rows,
    })
}

/// Writes score rows as CSV with a header line.
pub fn write_score_csv(rows: &[ScoreRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::SelectionResult;
    use crate::model::Skill;
    use crate::providers::MockScorer;
    use crate::tags::KnowledgeTag;
    use std::collections::BTreeSet;

    fn idx(tags: &[&str]) -> EquivalenceIndex {
        let mut i = EquivalenceIndex::new(0.9).unwrap();
        for t in tags {
            i.insert_isolated(KnowledgeTag::new(t).unwrap());
        }
        i
    }

    fn set(t: &[&str]) -> TagSet {
        TagSet::from_raw(t).unwrap()
    }

    fn candidate(id: &str, combined: f64, f_tag: f64) -> CandidateSkill {
        CandidateSkill {
            skill: Skill {
                origin: crate::model::Origin::Evolved { epoch: 1 },
                created_epoch: 1,
                ..Skill::human(id, id, "", "body")
            },
            source_pair_id: "p".into(),
            selection: SelectionResult::empty(&BTreeSet::new()),
            scores: Some(ScoreRecord {
                p_tag: f_tag,
                r_tag: f_tag,
                f_tag,
                alignment: 0.5,
                combined,
                cond_logprob: 0.0,
                uncond_logprob: 0.0,
                token_count: 1,
            }),
        }
    }

    #[test]
    fn coverage_cases() {
        let i = idx(&["a", "b", "c"]);
        let same = knowledge_coverage(&set(&["a", "b"]), &set(&["a", "b"]), &i).unwrap();
        assert_eq!((same.p_tag, same.r_tag, same.f_tag), (1.0, 1.0, 1.0));
        let none = knowledge_coverage(&set(&["a"]), &set(&["b", "c"]), &i).unwrap();
        assert_eq!((none.p_tag, none.r_tag, none.f_tag), (0.0, 0.0, 0.0));
        let half = knowledge_coverage(&set(&["a", "b"]), &set(&["b", "c"]), &i).unwrap();
        assert_eq!((half.p_tag, half.r_tag), (0.5, 0.5));
        assert!((half.f_tag - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coverage_through_equivalence() {
        let mut i = idx(&["latex_table_generation", "table_formatting", "x"]);
        i.merge(&KnowledgeTag::new("latex_table_generation").unwrap(), &KnowledgeTag::new("table_formatting").unwrap())
            .unwrap();
        let c = knowledge_coverage(&set(&["latex_table_generation", "x"]), &set(&["table_formatting"]), &i).unwrap();
        assert_eq!((c.p_tag, c.r_tag), (0.5, 1.0));
    }

    #[test]
    fn empty_target_gives_zero() {
        let c = knowledge_coverage(&set(&["a"]), &set(&[]), &idx(&["a"])).unwrap();
        assert_eq!(c.f_tag, 0.0);
        assert!(knowledge_coverage(&set(&[]), &set(&["a"]), &idx(&["a"])).is_err());
        assert!(matches!(knowledge_coverage(&set(&["q"]), &set(&["a"]), &idx(&["a"])), Err(Error::UnknownTag(_))));
    }

    #[test]
    fn sigmoid_closed_forms() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(alignment_from(-10.0, -10.0, 4).alignment, 0.5);
        assert!((alignment_from(2.0 * 3f64.ln(), 0.0, 2).alignment - 0.75).abs() < 1e-12);
    }

    #[test]
    fn alignment_is_monotone_in_difference() {
        let mut last = 0.0;
        for d in -20..=20 {
            let a = alignment_from(f64::from(d), 0.0, 5).alignment;
            assert!(a > last);
            last = a;
        }
    }

    #[test]
    fn alignment_with_mock_scorer() {
        let task = Task::new("t", "merge the quarterly sales tables").unwrap();
        let a = alignment_score("merge sales tables by quarter", &task, &MockScorer::new(1)).unwrap();
        assert!(a.alignment > 0.5);
        assert_eq!(a.token_count, 5);
        assert!(alignment_score(" ", &task, &MockScorer::new(1)).is_err());
    }

    #[test]
    fn combined_closed_forms() {
        assert_eq!(combined_score(1.0, 1.0), 1.0);
        assert_eq!(combined_score(0.0, 0.9), 0.0);
        assert_eq!(combined_score(1.0, 0.25), 0.5);
    }

    /// Exact rational oracle for the retention rule, ratio = num/den.
    fn oracle_count(n: usize, num: usize, den: usize) -> usize {
        if n == 0 {
            0
        } else {
            ((2 * num * n + den) / (2 * den)).max(1)
        }
    }

    #[test]
    fn retention_rule() {
        for (ratio, num, den) in [(0.1, 1, 10), (0.2, 1, 5), (0.5, 1, 2), (1.0, 1, 1)] {
            for n in 1..=100 {
                assert_eq!(retained_count(n, ratio), oracle_count(n, num, den), "n={n} ratio={ratio}");
            }
        }
        assert_eq!(retained_count(10, 0.2), 2);
        assert_eq!(retained_count(1, 0.1), 1);
        assert_eq!(retained_count(0, 0.5), 0);
    }

    #[test]
    fn filter_keeps_top_and_grows_library() {
        let cands: Vec<_> = (0..10).map(|i| candidate(&format!("c{i}"), f64::from(i) / 10.0, 0.5)).collect();
        let lib = SkillLibrary::empty();
        let out = filter_and_update(cands, &lib, 0.2).unwrap();
        let ids: Vec<_> = out.retained.iter().map(|c| c.skill.id.as_str()).collect();
        assert_eq!(ids, ["c9", "c8"]);
        assert_eq!(out.library.len(), 2);
        assert_eq!(out.library.epoch(), 1);
        assert_eq!(out.rows.iter().filter(|r| r.retained).count(), 2);
    }

    #[test]
    fn filter_edge_cases() {
        let lib = SkillLibrary::empty();
        let out = filter_and_update(vec![candidate("only", 0.1, 0.1)], &lib, 0.1).unwrap();
        assert_eq!(out.retained.len(), 1);
        let none = filter_and_update(vec![], &lib, 0.2).unwrap();
        assert_eq!(none.library.len(), 0);
        assert_eq!(none.library.epoch(), 1);
        assert!(matches!(filter_and_update(vec![], &lib, 0.0), Err(Error::Config(_))));
        assert!(matches!(filter_and_update(vec![], &lib, 1.5), Err(Error::Config(_))));
        let all = filter_and_update((0..7).map(|i| candidate(&format!("c{i}"), 0.3, 0.3)).collect(), &lib, 1.0).unwrap();
        assert_eq!(all.retained.len(), 7);
    }

    #[test]
    fn ties_break_by_f_then_id() {
        let lib = SkillLibrary::empty();
        let c = vec![candidate("b", 0.5, 0.4), candidate("a", 0.5, 0.4), candidate("z", 0.5, 0.9)];
        let out = filter_and_update(c, &lib, 1.0).unwrap();
        let ids: Vec<_> = out.rows.iter().map(|r| r.candidate_id.as_str()).collect();
        assert_eq!(ids, ["z", "a", "b"]);
    }

    #[test]
    fn ranking_is_scale_invariant() {
        let base: Vec<f64> = vec![0.31, 0.72, 0.05, 0.72, 0.5, 0.11, 0.9];
        let kept = |scale: f64| {
            let c = base.iter().enumerate().map(|(i, s)| candidate(&format!("c{i}"), s * scale, 0.5)).collect();
            filter_and_update(c, &SkillLibrary::empty(), 0.5)
                .unwrap()
                .retained
                .into_iter()
                .map(|c| c.skill.id)
                .collect::<Vec<_>>()
        };
        assert_eq!(kept(1.0), kept(0.37));
    }

    #[test]
    fn csv_dump_has_expected_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.csv");
        let out = filter_and_update(vec![candidate("c1", 0.4, 0.4)], &SkillLibrary::empty(), 0.2).unwrap();
        write_score_csv(&out.rows, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("candidate_id,pair_id,p_tag,r_tag,f_tag,alignment,combined,retained\n"));
        assert!(text.contains("c1,p,0.4,0.4,0.4,0.5,0.4,true"));
    }
}
