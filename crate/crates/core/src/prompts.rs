//! Prompt text for the three chat roles: skill tagging, target tagging and
//! candidate synthesis.
//!
//! Section headers are public so mock providers and tests can locate the
//! structured parts of a prompt.

use crate::model::{FailurePair, Skill};
use crate::tags::TagSet;

pub const SKILL_TAG_SYSTEM: &str = "You label agent skills with knowledge tags. \
A knowledge tag is a short lowercase phrase that names one piece of reusable procedural \
knowledge, for example `video editing` or `pdf text extraction`. \
Name capabilities, not tools or file names. Output one tag per line and nothing else.";

pub const TARGET_TAG_SYSTEM: &str = "You diagnose failed agent runs. Given a task and the \
trajectory of a failed attempt, list the knowledge tags the task requires: short lowercase \
phrases naming the procedural knowledge an agent needs to solve this kind of task. \
Output one tag per line and nothing else.";

pub const GENERATE_SYSTEM: &str = "You write reusable skills for LLM agents. A skill is a \
short procedure an agent can retrieve and follow. You are given a task, a failed attempt \
at it, skills selected from the current library and the knowledge those skills do not \
cover. Write one new skill.";

pub const TASK_SECTION: &str = "## Task";
pub const TRAJECTORY_SECTION: &str = "## Failed trajectory";
pub const SOURCE_SECTION: &str = "## Source skills";
pub const UNCOVERED_SECTION: &str = "## Uncovered knowledge tags";
pub const INSTRUCTION_SECTION: &str = "## Instructions";
pub const NO_SOURCES: &str = "No source skills were selected from the library.";
pub const NO_UNCOVERED: &str = "None.";
pub const SOURCE_TAGS_PREFIX: &str = "Tags: ";

pub const PARAPHRASE_SYSTEM: &str = "Rewrite the task description in different words. \
Keep every requirement. Output only the rewritten description.";

pub fn skill_tag_prompt(skill: &Skill) -> String {
    format!(
        "Skill name: {}\nSkill description: {}\nSkill content:\n{}\n\nList the knowledge tags of this skill, one per line.",
        skill.name, skill.description, skill.body
    )
}

pub fn retry_suffix() -> &'static str {
    "\n\nYour previous answer could not be parsed. Follow the requested output format exactly."
}

pub fn target_tag_prompt(pair: &FailurePair) -> String {
    format!(
        "{TASK_SECTION}\n{}\n\n{TRAJECTORY_SECTION}\n{}\nList the knowledge tags this task requires, one per line.",
        pair.task.description,
        pair.trajectory.render()
    )
}

/// Renders the candidate-synthesis prompt. Sources appear in the given order.
pub fn generation_prompt(pair: &FailurePair, sources: &[&Skill], uncovered: &TagSet) -> String {
    let mut out = String::new();
    out.push_str(TASK_SECTION);
    out.push('\n');
    out.push_str(pair.task.description.trim_end());
    out.push_str("\n\n");
    out.push_str(TRAJECTORY_SECTION);
    out.push('\n');
    out.push_str(&pair.trajectory.render());
    out.push('\n');
    out.push_str(SOURCE_SECTION);
    out.push('\n');
    if sources.is_empty() {
        out.push_str(NO_SOURCES);
        out.push('\n');
    }
    for (i, s) in sources.iter().enumerate() {
        out.push_str(&format!(
            "### Source skill {}: {}\nDescription: {}\n{SOURCE_TAGS_PREFIX}{}\nContent:\n{}\n",
            i + 1,
            s.name,
            s.description,
            s.tags.joined(", "),
            s.body.trim_end()
        ));
    }
    out.push('\n');
    out.push_str(UNCOVERED_SECTION);
    out.push('\n');
    if uncovered.is_empty() {
        out.push_str(NO_UNCOVERED);
        out.push('\n');
    }
    for t in uncovered {
        out.push_str(&format!("- {t}\n"));
    }
    out.push('\n');
    out.push_str(INSTRUCTION_SECTION);
    out.push('\n');
    out.push_str(
        "Transfer the useful knowledge of the source skills, cover the uncovered knowledge \
where possible, and address the failure shown in the trajectory. The skill must generalize \
to a class of related tasks rather than describe only this task or this trajectory.\n\
Answer in exactly this format:\n\
NAME: <short name>\n\
DESCRIPTION: <one sentence>\n\
BODY:\n\
<the procedure>\n",
    );
    out
}

/// Returns the lines of the section that starts with `header`, up to the next `## ` header.
pub fn section<'a>(prompt: &'a str, header: &str) -> Vec<&'a str> {
    let mut lines = prompt.lines();
    for l in lines.by_ref() {
        if l.trim_end() == header {
            break;
        }
    }
    lines.take_while(|l| !l.starts_with("## ")).collect()
}
