use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::evolution::CandidateSkill;
use crate::hash::{hash_parts, unit_f64};
use crate::model::Task;
use crate::providers::{LikelihoodResult, LikelihoodScorer, MockScorer, Providers};
use crate::text::tokenize;
use crate::scoring::{alignment_score, retained_count};

use super::epoch::run_epoch;
use super::kfold::prepare_state;
use super::world::{SyntheticWorld, WorldTask};
use super::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub scorer: String,
    pub mean_alignment: f64,
    /// Mean absolute alignment difference from the reference scorer.
    pub mae: f64,
    pub spearman: f64,
    /// Share of the reference top set also in this scorer's top set.
    pub top_overlap: f64,
}

/// 1-based ranks, highest value first, ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks. Identical
/// rankings give 1; otherwise a constant ranking gives 0.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman needs equal-length inputs");
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    if ra == rb {
        return 1.0;
    }
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

fn top_set(values: &[f64], ids: &[&str], k: usize) -> BTreeSet<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then_with(|| ids[a].cmp(ids[b])));
    order.into_iter().take(k).collect()
}

/// Recomputes alignment under each scorer and compares it with the first.
pub fn scorer_sensitivity(
    items: &[(CandidateSkill, Task)],
    scorers: &[(String, &dyn LikelihoodScorer)],
    ratio: f64,
) -> Result<Vec<SensitivityRow>> {
    if items.len() < 2 {
        return Err(Error::Input(format!("sensitivity needs at least 2 candidates, got {}", items.len())));
    }
    if scorers.is_empty() {
        return Err(Error::Input("no scorers given".into()));
    }
    let ids: Vec<&str> = items.iter().map(|(c, _)| c.skill.id.as_str()).collect();
    let k = retained_count(items.len(), ratio);
    let alignments = scorers
        .iter()
        .map(|(_, s)| {
            items
                .iter()
                .map(|(c, t)| alignment_score(&c.skill.body, t, *s).map(|a| a.alignment))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = &alignments[0];
    let ref_top = top_set(reference, &ids, k);
    let n = items.len() as f64;
    Ok(scorers
        .iter()
        .zip(&alignments)
        .map(|((name, _), a)| SensitivityRow {
            scorer: name.clone(),
            mean_alignment: a.iter().sum::<f64>() / n,
            mae: a.iter().zip(reference).map(|(x, y)| (x - y).abs()).sum::<f64>() / n,
            spearman: spearman(a, reference),
            top_overlap: top_set(a, &ids, k).intersection(&ref_top).count() as f64 / ref_top.len() as f64,
        })
        .collect())
}

/// Mock scorer whose conditional log-probabilities carry seeded per-token
/// jitter in `[-scale, scale)`. Reseeding a plain [`MockScorer`] would not
/// do: its base log-probabilities cancel in the alignment difference.
struct JitterScorer {
    inner: MockScorer,
    seed: u64,
    scale: f64,
}

impl LikelihoodScorer for JitterScorer {
    fn score_likelihood(&self, condition: &str, continuation: &str) -> std::result::Result<LikelihoodResult, ProviderError> {
        let mut r = self.inner.score_likelihood(condition, continuation)?;
        if !condition.is_empty() {
            r.sum_logprob += tokenize(continuation)
                .iter()
                .map(|t| self.scale * (2.0 * unit_f64(hash_parts(self.seed, &["jitter", condition, t])) - 1.0))
                .sum::<f64>();
        }
        Ok(r)
    }
}

/// One epoch on the whole world to collect candidates, then the reference
/// mock scorer against jittered and rescaled variants.
pub fn run_sensitivity(world: &SyntheticWorld, config: &RunConfig, providers: &Providers) -> Result<Vec<SensitivityRow>> {
    config.validate()?;
    config.install(|| {
        let state = prepare_state(world, config, providers)?;
        let tasks: Vec<&WorldTask> = world.tasks.iter().collect();
        let out = run_epoch(&state, &tasks, world.coverage_threshold, providers, config)?;
        let items: Vec<(CandidateSkill, Task)> = out
            .candidates
            .into_iter()
            .filter_map(|c| {
                let task = world.task(&c.source_pair_id)?.task.clone();
                Some((c, task))
            })
            .collect();
        let bonus = config.mock.scorer_bonus;
        let reference = MockScorer::with_bonus(config.seed, bonus);
        let jittered = JitterScorer {
            inner: reference.clone(),
            seed: config.seed.wrapping_add(1),
            scale: bonus * 0.1,
        };
        let half = MockScorer::with_bonus(config.seed, bonus * 0.5);
        let double = MockScorer::with_bonus(config.seed, bonus * 2.0);
        let scorers: Vec<(String, &dyn LikelihoodScorer)> = vec![
            ("reference".into(), &reference),
            ("jittered".into(), &jittered),
            ("half-bonus".into(), &half),
            ("double-bonus".into(), &double),
        ];
        scorer_sensitivity(&items, &scorers, config.filter_ratio)
    })?
}
