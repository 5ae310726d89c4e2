use std::collections::BTreeSet;

use crate::model::{EvaluationRecord, SkillLibrary, Step, Trajectory};
use crate::retrieval::Bm25Index;
use crate::tags::{EquivalenceIndex, KnowledgeTag};

use super::world::WorldTask;

pub const SUCCESS_RULE: &str = "Synthetic world: a task succeeds when the tag classes of its top-k BM25 \
skills cover at least the coverage threshold of its hidden required tag classes.";

/// Oracle agent: retrieves the top `k` skills for the task text and succeeds
/// when their tag classes cover enough of the required classes.
pub fn simulate_agent(
    task: &WorldTask,
    library: &SkillLibrary,
    bm25: &Bm25Index,
    index: &EquivalenceIndex,
    threshold: f64,
    k: usize,
) -> EvaluationRecord {
    let retrieved = bm25.retrieve(&task.task.description, k);
    let covered: BTreeSet<&KnowledgeTag> = retrieved
        .iter()
        .filter_map(|(id, _)| library.get(id))
        .flat_map(|s| s.tags.iter().map(|t| index.class_or_self(t)))
        .collect();
    let required: BTreeSet<&KnowledgeTag> = task.required.iter().map(|t| index.class_or_self(t)).collect();
    let missing: Vec<String> = task
        .required
        .iter()
        .filter(|t| !covered.contains(index.class_or_self(t)))
        .map(KnowledgeTag::phrase)
        .collect();
    let hit = required.iter().filter(|c| covered.contains(*c)).count();
    let fraction = if required.is_empty() { 1.0 } else { hit as f64 / required.len() as f64 };
    let success = fraction >= threshold;

    let ids: Vec<&str> = retrieved.iter().map(|(id, _)| id.as_str()).collect();
    let mut steps = vec![Step {
        action: format!("retrieve top {k} skills"),
        observation: if ids.is_empty() { "no skills retrieved".into() } else { format!("retrieved {}", ids.join(", ")) },
    }];
    if !missing.is_empty() {
        steps.push(Step {
            action: "apply retrieved skills".into(),
            observation: format!("no guidance found for {}", missing.join("; ")),
        });
    }
    EvaluationRecord {
        task: task.task.clone(),
        trajectory: Trajectory {
            task_id: task.task.id.clone(),
            steps,
            final_output: if success { "completed".into() } else { "incomplete".into() },
        },
        quality: u8::from(success),
        tokens_used: 0,
        wall_clock_ms: 0,
    }
}
