//! Skills, tasks, trajectories and evaluation records, plus JSONL persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tags::TagSet;

pub const LIBRARY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Human,
    Evolved { epoch: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skill {
    pub id: String,
    pub name: String,
    pub description: String,
    pub body: String,
    #[serde(default)]
    pub tags: TagSet,
    pub origin: Origin,
    #[serde(default)]
    pub created_epoch: u32,
}

impl Skill {
    pub fn human(id: impl Into<String>, name: impl Into<String>, description: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            description: description.into(),
            body: body.into(),
            tags: TagSet::new(),
            origin: Origin::Human,
            created_epoch: 0,
        }
    }

    /// Id for an evolved skill: `evo-{epoch}-{pair_id}-{seq}`.
    pub fn evolved_id(epoch: u32, pair_id: &str, seq: u32) -> String {
        format!("evo-{epoch}-{pair_id}-{seq}")
    }

    pub fn with_tags(mut self, tags: TagSet) -> Self {
        self.tags = tags;
        self
    }

    /// Text indexed for retrieval and scored for alignment.
    pub fn document_text(&self) -> String {
        format!("{}\n{}\n{}", self.name, self.description, self.body)
    }

    fn check(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::Integrity("skill with empty id".into()));
        }
        if self.origin == Origin::Human && self.created_epoch != 0 {
            return Err(Error::Integrity(format!(
                "human skill {} has created_epoch {}",
                self.id, self.created_epoch
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LibraryMeta {
    format_version: u32,
    epoch: u32,
}

/// An immutable snapshot of the skill library at some epoch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkillLibrary {
    skills: Vec<Skill>,
    epoch: u32,
}

impl SkillLibrary {
    pub fn new(skills: Vec<Skill>, epoch: u32) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &skills {
            s.check()?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate skill id {:?}", s.id)));
            }
        }
        let mut skills = skills;
        skills.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { skills, epoch })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn skills(&self) -> &[Skill] {
        &self.skills
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Skill> {
        self.skills
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.skills[i])
    }

    /// Replaces every skill's tag set, leaving everything else unchanged.
    pub fn map_tags(&self, mut f: impl FnMut(&Skill) -> Result<TagSet>) -> Result<Self> {
        let skills = self
            .skills
            .iter()
            .map(|s| Ok(s.clone().with_tags(f(s)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            skills,
            epoch: self.epoch,
        })
    }

    /// Union with `new`, advancing the epoch by one.
    pub fn add_skills(&self, new: impl IntoIterator<Item = Skill>) -> Result<Self> {
        let mut skills = self.skills.clone();
        skills.extend(new);
        Self::new(skills, self.epoch + 1)
    }

    /// Keeps a subset of skills, preserving the epoch.
    pub fn retain(&self, mut keep: impl FnMut(&Skill) -> bool) -> Self {
        Self {
            skills: self.skills.iter().filter(|s| keep(s)).cloned().collect(),
            epoch: self.epoch,
        }
    }

    /// Canonical JSONL: a metadata line, then one skill per line sorted by id.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&LibraryMeta {
            format_version: LIBRARY_FORMAT_VERSION,
            epoch: self.epoch,
        })?;
        out.push('\n');
        for s in &self.skills {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut epoch = 0;
        let mut skills = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
                location: format!("line {}", i + 1),
                message: e.to_string(),
            })?;
            if value.get("format_version").is_some() {
                let meta: LibraryMeta = parse_line(line, i + 1)?;
                if meta.format_version != LIBRARY_FORMAT_VERSION {
                    return Err(Error::Parse {
                        location: format!("line {}", i + 1),
                        message: format!("unsupported format_version {}", meta.format_version),
                    });
                }
                epoch = meta.epoch;
            } else {
                skills.push(parse_line::<Skill>(line, i + 1)?);
            }
        }
        Self::new(skills, epoch)
    }
}

pub fn load_library(path: impl AsRef<Path>) -> Result<SkillLibrary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SkillLibrary::from_jsonl(&text)
}

pub fn save_library(library: &SkillLibrary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, library.to_jsonl()?).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Task {
    pub fn new(id: impl Into<String>, description: impl Into<String>) -> Result<Self> {
        let task = Self {
            id: id.into(),
            description: description.into(),
            metadata: BTreeMap::new(),
        };
        task.check()?;
        Ok(task)
    }

    pub fn check(&self) -> Result<()> {
        if self.description.trim().is_empty() {
            return Err(Error::Input(format!("task {} has an empty description", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub action: String,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub final_output: String,
}

impl Trajectory {
    /// Steps rendered as a numbered list followed by the final output.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.steps.is_empty() {
            out.push_str("(no recorded steps)\n");
        }
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "{}. Action: {}\n   Observation: {}\n",
                i + 1,
                s.action,
                s.observation
            ));
        }
        out.push_str(&format!("Final output: {}\n", self.final_output));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub task: Task,
    pub trajectory: Trajectory,
    /// Binary task quality: 1 for success, 0 for failure.
    pub quality: u8,
    pub tokens_used: u64,
    pub wall_clock_ms: u64,
}

impl EvaluationRecord {
    pub fn succeeded(&self) -> bool {
        self.quality == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePair {
    pub task: Task,
    pub trajectory: Trajectory,
}

impl FailurePair {
    pub fn id(&self) -> &str {
        &self.task.id
    }
}

/// Keeps the failed records, in order.
pub fn collect_failures(records: &[EvaluationRecord]) -> Vec<FailurePair> {
    records
        .iter()
        .filter(|r| r.quality == 0)
        .map(|r| FailurePair {
            task: r.task.clone(),
            trajectory: r.trajectory.clone(),
        })
        .collect()
}

/// Reads a JSONL file of `T`, one value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l, i + 1))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<Vec<Task>> {
    let tasks: Vec<Task> = read_jsonl(path)?;
    let mut seen = BTreeSet::new();
    for t in &tasks {
        t.check()?;
        if !seen.insert(t.id.clone()) {
            return Err(Error::Integrity(format!("duplicate task id {:?}", t.id)));
        }
    }
    Ok(tasks)
}

fn parse_line<T: DeserializeOwned>(line: &str, lineno: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        location: format!("line {lineno}"),
        message: e.to_string(),
    })
}
