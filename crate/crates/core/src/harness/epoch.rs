use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{generate_candidates, tag_candidates, CandidateSkill, GenerationConfig, TargetedPair};
use crate::model::{collect_failures, EvaluationRecord, SkillLibrary};
use crate::providers::Providers;
use crate::retrieval::Bm25Index;
use crate::scoring::{filter_and_update, rank_order, score_candidate, ScoreRow};
use crate::tags::{generate_target_tags, EquivalenceIndex};

use super::agent::simulate_agent;
use super::world::WorldTask;
use super::RunConfig;

/// Library and tag index carried from one epoch to the next.
#[derive(Debug, Clone)]
pub struct EpochState {
    pub library: SkillLibrary,
    pub index: EquivalenceIndex,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub failures: usize,
    pub candidates: usize,
    pub retained: usize,
    pub mean_f_tag: Option<f64>,
    pub mean_alignment: Option<f64>,
    pub tokens_used: u64,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub records: Vec<EvaluationRecord>,
    pub state: EpochState,
    pub stats: StepStats,
    /// Scored candidates in rank order.
    pub candidates: Vec<CandidateSkill>,
    pub score_rows: Vec<ScoreRow>,
}

pub fn evaluate_tasks(tasks: &[&WorldTask], state: &EpochState, threshold: f64, k: usize) -> Vec<EvaluationRecord> {
    let bm25 = Bm25Index::build(&state.library);
    tasks
        .par_iter()
        .map(|t| simulate_agent(t, &state.library, &bm25, &state.index, threshold, k))
        .collect()
}

pub fn pass_rate(records: &[EvaluationRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.succeeded()).count() as f64 / records.len() as f64
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One evolution step from evaluation records: target tags, source selection,
/// synthesis, tagging, scoring and filtering. Returns every scored candidate
/// in rank order; the first `stats.retained` joined the library.
pub fn evolve_step(
    records: &[EvaluationRecord],
    state: &EpochState,
    providers: &Providers,
    config: &RunConfig,
    dump_prompts: Option<&std::path::Path>,
) -> Result<(EpochState, StepStats, Vec<CandidateSkill>, Vec<ScoreRow>)> {
    let start = Instant::now();
    let before = providers.usage();
    let failures = collect_failures(records);

    let targeted: Vec<Option<TargetedPair>> = failures
        .into_par_iter()
        .map(|pair| match generate_target_tags(&pair, providers) {
            Ok(target) => Ok(Some(TargetedPair { pair, target })),
            Err(Error::Tagging(msg)) => {
                tracing::warn!(pair = pair.id(), %msg, "no target tags, skipping pair");
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let n_failures = targeted.len();
    let targeted: Vec<TargetedPair> = targeted.into_iter().flatten().collect();

    let mut index = state.index.clone();
    index.insert(targeted.iter().flat_map(|t| t.target.iter()), providers)?;

    let gen_config = GenerationConfig {
        candidates_per_pair: config.candidates_per_pair,
        epoch: state.library.epoch() + 1,
        strategy: config.strategy,
        dump_prompts: dump_prompts.map(Into::into),
        ..GenerationConfig::default()
    };
    let candidates = generate_candidates(&targeted, &state.library, &index, providers, &gen_config)?;
    let candidates = tag_candidates(candidates, providers, &mut index, providers)?;

    let scored: Vec<CandidateSkill> = candidates
        .into_par_iter()
        .filter_map(|mut c| {
            let tp = targeted.iter().find(|t| t.pair.id() == c.source_pair_id)?;
            match score_candidate(&c, &tp.target, &tp.pair.task, &index, providers) {
                Ok(s) => {
                    c.scores = Some(s);
                    Some(c)
                }
                Err(e) => {
                    tracing::warn!(candidate = %c.skill.id, error = %e, "scoring failed, dropping candidate");
                    None
                }
            }
        })
        .collect();

    let mean_f_tag = mean(scored.iter().filter_map(|c| c.scores.map(|s| s.f_tag)));
    let mean_alignment = mean(scored.iter().filter_map(|c| c.scores.map(|s| s.alignment)));
    let n_candidates = scored.len();
    let mut ranked = scored.clone();
    ranked.sort_by(rank_order);
    let outcome = filter_and_update(scored, &state.library, config.filter_ratio)?;
    index.insert(outcome.retained.iter().flat_map(|c| c.skill.tags.iter()), providers)?;

    let stats = StepStats {
        failures: n_failures,
        candidates: n_candidates,
        retained: outcome.retained.len(),
        mean_f_tag,
        mean_alignment,
        tokens_used: providers.usage().since(&before).tokens,
        wall_clock_ms: start.elapsed().as_millis() as u64,
    };
    let new_state = EpochState {
        library: outcome.library,
        index,
    };
    Ok((new_state, stats, ranked, outcome.rows))
}

/// Evaluate `tasks` with the current library, then evolve on the failures.
pub fn run_epoch(
    state: &EpochState,
    tasks: &[&WorldTask],
    threshold: f64,
    providers: &Providers,
    config: &RunConfig,
) -> Result<EpochOutcome> {
    let start = Instant::now();
    let records = evaluate_tasks(tasks, state, threshold, config.retrieval_k);
    let (new_state, mut stats, candidates, score_rows) = evolve_step(&records, state, providers, config, None)?;
    stats.wall_clock_ms = start.elapsed().as_millis() as u64;
    Ok(EpochOutcome {
        records,
        state: new_state,
        stats,
        candidates,
        score_rows,
    })
}
