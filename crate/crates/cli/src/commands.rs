use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use skillforge::evolution::CandidateSkill;
use skillforge::harness::{
    csv_string, emit_report, evolve_step, evolve_world, render_markdown, render_sweep_markdown, run_kfold, run_sensitivity,
    run_transfer, sweep, write_rows_csv, write_sweep_csv, EpochState, EvolutionReport, RunConfig, SensitivityRow,
    SweepDimension, SweepTable, WorldConfig,
};
use skillforge::model::{load_tasks, read_jsonl, write_jsonl};
use skillforge::retrieval::Bm25Index;
use skillforge::scoring::{filter_and_update, score_candidate, write_score_csv};
use skillforge::tags::{generate_skill_tags, generate_target_tags};
use skillforge::{
    load_library, save_library, select_sources, CoverInstance, EquivalenceIndex, EvaluationRecord, FailurePair,
    SelectionResult, SkillLibrary, Strategy, TagSet, Task, Trajectory,
};

use crate::config::{chat, load_world, providers, ProviderKind, Resolved, RunArgs, WorldArgs};
use crate::UsageError;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Tags every skill that has no tags yet.
fn ensure_tagged(library: SkillLibrary, chat: &dyn skillforge::ChatModel) -> Result<SkillLibrary> {
    Ok(library.map_tags(|s| if s.tags.is_empty() { generate_skill_tags(s, chat) } else { Ok(s.tags.clone()) })?)
}

#[derive(Debug, Serialize)]
struct TaskTags<'a> {
    task_id: &'a str,
    tags: TagSet,
}

pub fn tag(run: &RunArgs, library: Option<&Path>, tasks: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let config = run.resolve()?;
    let p = providers(ProviderKind::from_mock(run.mock), &[], &config);
    let mut buf = Vec::new();
    if let Some(path) = library {
        let lib = load_library(path)?;
        let tagged = lib.map_tags(|s| generate_skill_tags(s, &p))?;
        buf.extend(tagged.to_jsonl()?.into_bytes());
    } else if let Some(path) = tasks {
        for task in load_tasks(path)? {
            // A task with no run yet is tagged from its description alone.
            let pair = FailurePair {
                trajectory: Trajectory {
                    task_id: task.id.clone(),
                    steps: Vec::new(),
                    final_output: String::new(),
                },
                task,
            };
            let tags = generate_target_tags(&pair, &p)?;
            serde_json::to_writer(&mut buf, &TaskTags { task_id: &pair.task.id, tags })?;
            buf.push(b'\n');
        }
    }
    match out {
        Some(path) => fs::write(path, buf).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().write_all(&buf)?),
    }
}

pub fn select(instance: &Path, strategy: &str, json: bool) -> Result<()> {
    let strategy: Strategy = strategy.parse().map_err(|e: skillforge::Error| UsageError(e.to_string()))?;
    let instance: CoverInstance = read_json(instance)?;
    let result: SelectionResult = select_sources(&instance, strategy)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else {
        println!("{}", result.selected.join(","));
    }
    Ok(())
}

pub fn retrieve(library: &Path, query: &str, k: usize) -> Result<()> {
    if k == 0 {
        return Err(UsageError("--k must be at least 1".into()).into());
    }
    let lib = load_library(library)?;
    let index = Bm25Index::build(&lib);
    let mut out = std::io::stdout().lock();
    for (id, score) in index.retrieve(query, k) {
        writeln!(out, "{id}\t{score:.6}")?;
    }
    Ok(())
}

pub fn simworld(seed: Option<u64>, world_config: Option<&Path>, out: &Path, tasks_out: Option<&Path>, library_out: Option<&Path>) -> Result<()> {
    let mut config: WorldConfig = match world_config {
        Some(p) => read_json(p)?,
        None => WorldConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let world = skillforge::harness::SyntheticWorld::generate(&config)?;
    write_json(out, &world)?;
    if let Some(p) = tasks_out {
        let tasks: Vec<&Task> = world.tasks.iter().map(|t| &t.task).collect();
        write_jsonl(p, &tasks)?;
    }
    if let Some(p) = library_out {
        save_library(&SkillLibrary::new(world.initial_skills.clone(), 0)?, p)?;
    }
    Ok(())
}

pub struct EvolveArgs<'a> {
    pub run: &'a RunArgs,
    pub world: &'a WorldArgs,
    pub out: &'a Path,
    pub records: Option<&'a Path>,
    pub library: Option<&'a Path>,
    pub dump_prompts: Option<&'a Path>,
}

pub fn evolve(a: EvolveArgs) -> Result<()> {
    let config = a.run.resolve()?;
    let kind = ProviderKind::from_mock(a.run.mock);
    create_dir(a.out)?;
    if let Some(dir) = a.dump_prompts {
        create_dir(dir)?;
    }
    match (a.records, a.library) {
        (Some(records), Some(library)) => evolve_records(&config, kind, records, library, a.out, a.dump_prompts),
        (None, None) => {
            let world = a.world.load(&config)?;
            let p = providers(kind, &[&world], &config);
            let run = evolve_world(&world, &config, &p, a.dump_prompts)?;
            save_library(&run.library, a.out.join("library.jsonl"))?;
            emit_report(&run.report, a.out.join("report.json"))?;
            let scores = a.out.join("scores");
            create_dir(&scores)?;
            for (i, rows) in run.score_rows.iter().enumerate() {
                write_score_csv(rows, scores.join(format!("epoch-{}.csv", i + 1)))?;
            }
            write_json(&a.out.join("resolved.json"), &Resolved::new("evolve", kind, &run.report.config, Some(&world.config)))
        }
        _ => Err(UsageError("--records and --library must be given together".into()).into()),
    }
}

#[derive(Debug, Serialize)]
struct StepReport<'a> {
    resolved: Resolved<'a>,
    stats: skillforge::harness::StepStats,
    library_size: usize,
}

/// One evolution step from recorded runs against an existing library.
fn evolve_records(config: &RunConfig, kind: ProviderKind, records: &Path, library: &Path, out: &Path, dump: Option<&Path>) -> Result<()> {
    let records: Vec<EvaluationRecord> = read_jsonl(records)?;
    let p = providers(kind, &[], config);
    let library = ensure_tagged(load_library(library)?, &p)?;
    let (state, stats, _, rows) = config.install(|| -> skillforge::Result<_> {
        let index = EquivalenceIndex::build(library.skills().iter().flat_map(|s| s.tags.iter()), &p, config.delta)?;
        evolve_step(&records, &EpochState { library, index }, &p, config, dump)
    })??;
    save_library(&state.library, out.join("library.jsonl"))?;
    write_score_csv(&rows, out.join("scores.csv"))?;
    let report = StepReport {
        resolved: Resolved::new("evolve", kind, config, None),
        library_size: state.library.len(),
        stats,
    };
    write_json(&out.join("step.json"), &report)
}

/// One line of a `score` input file.
#[derive(Debug, Deserialize)]
struct ScoreInput {
    skill: skillforge::Skill,
    /// Failure pair the candidate was written for; defaults to the task id.
    #[serde(default)]
    pair_id: Option<String>,
    task: Task,
    /// Target tags of the failure. Tagged by the chat model when absent.
    #[serde(default)]
    target: Option<Vec<String>>,
}

pub fn score(run: &RunArgs, input: &Path, library: Option<&Path>, out: Option<&Path>, library_out: Option<&Path>) -> Result<()> {
    let config = run.resolve()?;
    let kind = ProviderKind::from_mock(run.mock);
    let p = providers(kind, &[], &config);
    let inputs: Vec<ScoreInput> = read_jsonl(input)?;
    let library = match library {
        Some(path) => load_library(path)?,
        None => SkillLibrary::empty(),
    };
    let mut prepared = Vec::with_capacity(inputs.len());
    for item in inputs {
        let target = match item.target {
            Some(raw) => TagSet::from_raw(raw)?,
            None => generate_target_tags(
                &FailurePair {
                    trajectory: Trajectory {
                        task_id: item.task.id.clone(),
                        steps: Vec::new(),
                        final_output: String::new(),
                    },
                    task: item.task.clone(),
                },
                &p,
            )?,
        };
        let mut skill = item.skill;
        if skill.tags.is_empty() {
            skill.tags = generate_skill_tags(&skill, &p)?;
        }
        let candidate = CandidateSkill {
            source_pair_id: item.pair_id.unwrap_or_else(|| item.task.id.clone()),
            selection: SelectionResult::empty(&Default::default()),
            scores: None,
            skill,
        };
        prepared.push((candidate, target, item.task));
    }
    let all_tags = prepared.iter().flat_map(|(c, t, _)| c.skill.tags.iter().chain(t.iter()));
    let index = EquivalenceIndex::build(all_tags, &p, config.delta)?;
    let scored = prepared
        .into_iter()
        .map(|(mut c, target, task)| {
            c.scores = Some(score_candidate(&c, &target, &task, &index, &p)?);
            Ok(c)
        })
        .collect::<skillforge::Result<Vec<_>>>()?;
    let outcome = filter_and_update(scored, &library, config.filter_ratio)?;
    match out {
        Some(path) => write_score_csv(&outcome.rows, path)?,
        None => print!("{}", csv_string(&outcome.rows)?),
    }
    if let Some(path) = library_out {
        save_library(&outcome.library, path)?;
    }
    Ok(())
}

pub fn eval(run: &RunArgs, world: &WorldArgs, eval_world: Option<&Path>, paraphrase: Option<ProviderKind>, out: &Path) -> Result<()> {
    let config = run.resolve()?;
    let kind = ProviderKind::from_mock(run.mock);
    let train = world.load(&config)?;
    let eval = match (eval_world, paraphrase) {
        (Some(_), Some(_)) => return Err(UsageError("--eval-world and --paraphrase-provider are exclusive".into()).into()),
        (Some(path), None) => Some(load_world(path)?),
        (None, Some(pk)) => {
            let name = format!("{}-paraphrased", train.name());
            Some(train.paraphrased(&name, chat(pk, &config).as_ref())?)
        }
        (None, None) => None,
    };
    let report: EvolutionReport = match &eval {
        Some(e) => run_transfer(&train, e, &config, &providers(kind, &[&train, e], &config))?,
        None => run_kfold(&train, &config, &providers(kind, &[&train], &config))?,
    };
    create_dir(out)?;
    emit_report(&report, out.join("report.json"))?;
    write_json(&out.join("resolved.json"), &Resolved::new("eval", kind, &config, Some(&train.config)))
}

#[derive(Debug, Serialize)]
struct SensitivityTable<'a> {
    config: &'a RunConfig,
    world: &'a WorldConfig,
    rows: Vec<SensitivityRow>,
}

pub fn sweep_cmd(run: &RunArgs, world_config: Option<&Path>, dimension: &str, out: &Path) -> Result<()> {
    let config = run.resolve()?;
    if !run.mock {
        return Err(UsageError("sweeps run on the mock providers only; pass --mock".into()).into());
    }
    let world: WorldConfig = match world_config {
        Some(p) => read_json(p)?,
        None => WorldConfig::seeded(config.seed),
    };
    let dim = match dimension {
        "scorer" => None,
        d => Some(d.parse::<SweepDimension>().map_err(|_| {
            UsageError(format!(
                "unknown sweep dimension {d:?}; expected epochs, filter_ratio, label_scale, transfer or scorer"
            ))
        })?),
    };
    create_dir(out)?;
    let Some(dim) = dim else {
        let w = skillforge::harness::SyntheticWorld::generate(&world)?;
        let rows = run_sensitivity(&w, &config, &providers(ProviderKind::Mock, &[&w], &config))?;
        write_rows_csv(&rows, out.join("sensitivity.csv"))?;
        return write_json(&out.join("sensitivity.json"), &SensitivityTable { config: &config, world: &world, rows });
    };
    let table = sweep(&config, &world, dim)?;
    write_sweep_csv(&table, out.join("sweep.csv"))?;
    fs::write(out.join("sweep.md"), render_sweep_markdown(&table))?;
    write_json(&out.join("sweep.json"), &table)
}

pub fn report(input: &Path, out: Option<&Path>) -> Result<()> {
    let value: serde_json::Value = read_json(input)?;
    let md = if let Ok(r) = serde_json::from_value::<EvolutionReport>(value.clone()) {
        render_markdown(&r)
    } else if let Ok(t) = serde_json::from_value::<SweepTable>(value) {
        render_sweep_markdown(&t)
    } else {
        anyhow::bail!("{} is neither an evolution report nor a sweep table", input.display());
    };
    match out {
        Some(path) => fs::write(path, md).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().write_all(md.as_bytes())?),
    }
}
