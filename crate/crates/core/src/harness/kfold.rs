use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::hash_parts;
use crate::model::{Origin, SkillLibrary};
use crate::providers::Providers;
use crate::scoring::ScoreRow;
use crate::tags::{generate_skill_tags, EquivalenceIndex};

use super::agent::SUCCESS_RULE;
use super::epoch::{evaluate_tasks, evolve_step, pass_rate, EpochState};
use super::report::REPORT_VERSION;
use super::world::{SyntheticWorld, WorldTask};
use super::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub folds: usize,
    pub runs: usize,
    /// True when evolution and evaluation share tasks (a single fold).
    pub leaky: bool,
}

/// One epoch of one (run, fold) cell. Epoch 0 is the unevolved library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: u32,
    pub library_size: usize,
    /// Held-out pass rate with the library as it stands after this epoch.
    pub pass_rate: f64,
    /// Pass rate on the evolution tasks at the start of this epoch.
    pub train_pass_rate: Option<f64>,
    pub failures: usize,
    pub candidates: usize,
    pub retained: usize,
    pub mean_f_tag: Option<f64>,
    pub mean_alignment: Option<f64>,
    pub tokens_used: u64,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub run: usize,
    pub fold: usize,
    pub train_tasks: usize,
    pub eval_tasks: usize,
    pub epochs: Vec<EpochRow>,
}

/// Per-epoch means over all cells. Token and time totals are sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: u32,
    pub library_size: f64,
    pub pass_rate: f64,
    pub pass_rate_std: f64,
    pub failures: f64,
    pub retained: f64,
    pub mean_f_tag: Option<f64>,
    pub mean_alignment: Option<f64>,
    pub tokens_used: u64,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub report_version: u32,
    pub config: RunConfig,
    pub train_world: String,
    pub eval_world: String,
    pub protocol: Protocol,
    pub success_rule: String,
    /// Tokens spent tagging the initial libraries.
    pub setup_tokens: u64,
    /// Setup tokens plus every epoch's tokens.
    pub tokens_used: u64,
    pub base_pass_rate: f64,
    pub final_pass_rate: f64,
    pub final_pass_rate_std: f64,
    pub epochs: Vec<EpochSummary>,
    pub cells: Vec<CellReport>,
    pub wall_clock_ms: u64,
}

impl EvolutionReport {
    /// A report with no epochs.
    pub fn empty(config: &RunConfig) -> Self {
        Self {
            report_version: REPORT_VERSION,
            config: config.clone(),
            train_world: String::new(),
            eval_world: String::new(),
            protocol: Protocol {
                folds: config.folds,
                runs: config.runs,
                leaky: config.folds == 1,
            },
            success_rule: SUCCESS_RULE.into(),
            setup_tokens: 0,
            tokens_used: 0,
            base_pass_rate: 0.0,
            final_pass_rate: 0.0,
            final_pass_rate_std: 0.0,
            epochs: Vec::new(),
            cells: Vec::new(),
            wall_clock_ms: 0,
        }
    }

    /// Mean held-out pass rate per epoch.
    pub fn pass_rates(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.pass_rate).collect()
    }
}

/// Fold of each task for run `run`: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n_tasks: usize, folds: usize, seed: u64, run: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_tasks).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hash_parts(seed, &["folds", &run.to_string()]));
    order.shuffle(&mut rng);
    let mut fold = vec![0; n_tasks];
    for (pos, &task) in order.iter().enumerate() {
        fold[task] = pos % folds;
    }
    fold
}

/// Tags the world's labeled initial skills and indexes their tags.
pub fn prepare_state(world: &SyntheticWorld, config: &RunConfig, providers: &Providers) -> Result<EpochState> {
    let skills = world.labeled_skills(config.label_scale, config.seed);
    let tagged = skills
        .into_par_iter()
        .map(|s| {
            let tags = generate_skill_tags(&s, providers)?;
            Ok(s.with_tags(tags))
        })
        .collect::<Result<Vec<_>>>()?;
    let library = SkillLibrary::new(tagged, 0)?;
    let index = EquivalenceIndex::build(library.skills().iter().flat_map(|s| s.tags.iter()), providers, config.delta)?;
    Ok(EpochState { library, index })
}

fn eval_state(train: &EpochState, eval_initial: Option<&EpochState>, providers: &Providers) -> Result<EpochState> {
    let Some(initial) = eval_initial else {
        return Ok(train.clone());
    };
    let evolved = train
        .library
        .skills()
        .iter()
        .filter(|s| matches!(s.origin, Origin::Evolved { .. }))
        .cloned();
    let skills: Vec<_> = initial.library.skills().iter().cloned().chain(evolved).collect();
    let library = SkillLibrary::new(skills, train.library.epoch())?;
    let mut index = train.index.clone();
    index.insert(initial.library.skills().iter().flat_map(|s| s.tags.iter()), providers)?;
    Ok(EpochState { library, index })
}

/// Held-out tasks of `fold`, or the rest. A single fold uses every task for both.
fn pick_tasks<'w>(world: &'w SyntheticWorld, config: &RunConfig, run: usize, fold: usize, held_out: bool) -> Vec<&'w WorldTask> {
    if config.folds == 1 {
        return world.tasks.iter().collect();
    }
    let folds = fold_assignment(world.tasks.len(), config.folds, config.seed, run);
    world
        .tasks
        .iter()
        .zip(folds)
        .filter(|(_, f)| (*f == fold) == held_out)
        .map(|(t, _)| t)
        .collect()
}

struct CellOutput {
    report: CellReport,
    state: EpochState,
    score_rows: Vec<Vec<ScoreRow>>,
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    train_world: &SyntheticWorld,
    eval_world: &SyntheticWorld,
    train_initial: &EpochState,
    eval_initial: Option<&EpochState>,
    run: usize,
    fold: usize,
    config: &RunConfig,
    providers: &Providers,
    dump_prompts: Option<&Path>,
) -> Result<CellOutput> {
    let providers = providers.with_fresh_meter();
    let train_tasks = pick_tasks(train_world, config, run, fold, false);
    let eval_tasks = pick_tasks(eval_world, config, run, fold, true);
    let threshold = eval_world.coverage_threshold;

    let mut state = train_initial.clone();
    let held_out = |state: &EpochState| -> Result<f64> {
        let s = eval_state(state, eval_initial, &providers)?;
        Ok(pass_rate(&evaluate_tasks(&eval_tasks, &s, threshold, config.retrieval_k)))
    };
    let mut rows = vec![EpochRow {
        epoch: 0,
        library_size: state.library.len(),
        pass_rate: held_out(&state)?,
        train_pass_rate: None,
        failures: 0,
        candidates: 0,
        retained: 0,
        mean_f_tag: None,
        mean_alignment: None,
        tokens_used: 0,
        wall_clock_ms: 0,
    }];
    let mut score_rows = Vec::new();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let records = evaluate_tasks(&train_tasks, &state, train_world.coverage_threshold, config.retrieval_k);
        let (next, stats, _, scores) = evolve_step(&records, &state, &providers, config, dump_prompts)?;
        state = next;
        score_rows.push(scores);
        rows.push(EpochRow {
            epoch,
            library_size: state.library.len(),
            pass_rate: held_out(&state)?,
            train_pass_rate: Some(pass_rate(&records)),
            failures: stats.failures,
            candidates: stats.candidates,
            retained: stats.retained,
            mean_f_tag: stats.mean_f_tag,
            mean_alignment: stats.mean_alignment,
            tokens_used: stats.tokens_used,
            wall_clock_ms: start.elapsed().as_millis() as u64,
        });
    }
    Ok(CellOutput {
        report: CellReport {
            run,
            fold,
            train_tasks: train_tasks.len(),
            eval_tasks: eval_tasks.len(),
            epochs: rows,
        },
        state,
        score_rows,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| mean_std(&v).0)
}

fn summarize(cells: &[CellReport], epochs: u32) -> Vec<EpochSummary> {
    (0..=epochs as usize)
        .map(|e| {
            let rows: Vec<&EpochRow> = cells.iter().map(|c| &c.epochs[e]).collect();
            let col = |f: fn(&EpochRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (pass, pass_std) = mean_std(&col(|r| r.pass_rate));
            EpochSummary {
                epoch: e as u32,
                library_size: mean_std(&col(|r| r.library_size as f64)).0,
                pass_rate: pass,
                pass_rate_std: pass_std,
                failures: mean_std(&col(|r| r.failures as f64)).0,
                retained: mean_std(&col(|r| r.retained as f64)).0,
                mean_f_tag: mean_opt(rows.iter().map(|r| r.mean_f_tag)),
                mean_alignment: mean_opt(rows.iter().map(|r| r.mean_alignment)),
                tokens_used: rows.iter().map(|r| r.tokens_used).sum(),
                wall_clock_ms: rows.iter().map(|r| r.wall_clock_ms).sum(),
            }
        })
        .collect()
}

/// Evolve on `train_world`, evaluate on `eval_world`, over folds and runs.
/// Must be called inside a rayon pool; see [`run_kfold`].
pub(crate) fn run_protocol(
    train_world: &SyntheticWorld,
    eval_world: &SyntheticWorld,
    config: &RunConfig,
    providers: &Providers,
) -> Result<EvolutionReport> {
    protocol_cells(train_world, eval_world, config, providers, None).map(|(r, _)| r)
}

fn protocol_cells(
    train_world: &SyntheticWorld,
    eval_world: &SyntheticWorld,
    config: &RunConfig,
    providers: &Providers,
    dump_prompts: Option<&Path>,
) -> Result<(EvolutionReport, Vec<CellOutput>)> {
    config.validate()?;
    let start = Instant::now();
    for w in [train_world, eval_world] {
        if w.tasks.len() < config.folds {
            return Err(Error::Config(format!(
                "world {} has {} tasks, fewer than {} folds",
                w.name(),
                w.tasks.len(),
                config.folds
            )));
        }
    }
    let setup = providers.with_fresh_meter();
    let train_initial = prepare_state(train_world, config, &setup)?;
    let same = train_world.name() == eval_world.name();
    let eval_initial = if same { None } else { Some(prepare_state(eval_world, config, &setup)?) };
    let setup_tokens = setup.usage().tokens;

    let grid: Vec<(usize, usize)> = (0..config.runs).flat_map(|r| (0..config.folds).map(move |f| (r, f))).collect();
    let outputs = grid
        .par_iter()
        .map(|&(run, fold)| {
            run_cell(
                train_world,
                eval_world,
                &train_initial,
                eval_initial.as_ref(),
                run,
                fold,
                config,
                providers,
                dump_prompts,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<CellReport> = outputs.iter().map(|o| o.report.clone()).collect();

    let epochs = summarize(&cells, config.epochs);
    let finals: Vec<f64> = cells.iter().map(|c| c.epochs.last().map_or(0.0, |r| r.pass_rate)).collect();
    let (final_pass_rate, final_pass_rate_std) = mean_std(&finals);
    let tokens_used = setup_tokens + cells.iter().flat_map(|c| &c.epochs).map(|r| r.tokens_used).sum::<u64>();
    let report = EvolutionReport {
        report_version: REPORT_VERSION,
        config: config.clone(),
        train_world: train_world.name().into(),
        eval_world: eval_world.name().into(),
        protocol: Protocol {
            folds: config.folds,
            runs: config.runs,
            leaky: config.folds == 1,
        },
        success_rule: SUCCESS_RULE.into(),
        setup_tokens,
        tokens_used,
        base_pass_rate: epochs[0].pass_rate,
        final_pass_rate,
        final_pass_rate_std,
        epochs,
        cells,
        wall_clock_ms: start.elapsed().as_millis() as u64,
    };
    Ok((report, outputs))
}

/// k-fold protocol on one world: evolve on the other folds, evaluate on the held-out one.
pub fn run_kfold(world: &SyntheticWorld, config: &RunConfig, providers: &Providers) -> Result<EvolutionReport> {
    config.install(|| run_protocol(world, world, config, providers))?
}

/// Evolve on `train` and evaluate on `eval` with `eval`'s own initial skills
/// plus the evolved ones.
pub fn run_transfer(
    train: &SyntheticWorld,
    eval: &SyntheticWorld,
    config: &RunConfig,
    providers: &Providers,
) -> Result<EvolutionReport> {
    config.install(|| run_protocol(train, eval, config, providers))?
}

/// Result of evolving one world's library on all of its tasks.
#[derive(Debug, Clone)]
pub struct EvolveRun {
    pub library: SkillLibrary,
    /// Single-run, single-fold report; flagged leaky.
    pub report: EvolutionReport,
    /// Score table of each epoch, in rank order.
    pub score_rows: Vec<Vec<ScoreRow>>,
}

/// Evolves on every task of `world` for `config.epochs` epochs and keeps the
/// final library. Folds and runs are forced to 1.
pub fn evolve_world(
    world: &SyntheticWorld,
    config: &RunConfig,
    providers: &Providers,
    dump_prompts: Option<&Path>,
) -> Result<EvolveRun> {
    let config = RunConfig {
        folds: 1,
        runs: 1,
        ..config.clone()
    };
    let (report, mut outputs) = config.install(|| protocol_cells(world, world, &config, providers, dump_prompts))??;
    let out = outputs.pop().expect("one cell");
    Ok(EvolveRun {
        library: out.state.library,
        report,
        score_rows: out.score_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::mock_providers;
    use crate::harness::world::WorldConfig;
    use std::collections::BTreeSet;

    #[test]
    fn folds_partition_tasks() {
        for run in 0..3 {
            let f = fold_assignment(50, 3, 7, run);
            for k in 0..3 {
                let n = f.iter().filter(|&&x| x == k).count();
                assert!((16..=17).contains(&n));
            }
        }
        assert_ne!(fold_assignment(50, 3, 7, 0), fold_assignment(50, 3, 7, 1));
    }

    fn small_config() -> RunConfig {
        RunConfig {
            epochs: 2,
            runs: 1,
            ..RunConfig::default()
        }
    }

    #[test]
    fn no_leakage_between_train_and_held_out() {
        let w = SyntheticWorld::generate(&WorldConfig::default()).unwrap();
        for run in 0..3 {
            let folds = fold_assignment(w.tasks.len(), 3, 0, run);
            let mut seen = BTreeSet::new();
            for fold in 0..3 {
                let held: BTreeSet<_> = (0..w.tasks.len()).filter(|&i| folds[i] == fold).collect();
                let train: BTreeSet<_> = (0..w.tasks.len()).filter(|&i| folds[i] != fold).collect();
                assert!(held.is_disjoint(&train));
                for i in held {
                    assert!(seen.insert(i));
                }
            }
            assert_eq!(seen.len(), w.tasks.len());
        }
    }

    #[test]
    fn report_invariants() {
        let w = SyntheticWorld::generate(&WorldConfig::default()).unwrap();
        let config = small_config();
        let p = mock_providers(&[&w], &config);
        let r = run_kfold(&w, &config, &p).unwrap();
        assert_eq!(r.epochs.len(), 3);
        assert_eq!(r.cells.len(), 3);
        assert!(!r.protocol.leaky);
        for c in &r.cells {
            assert_eq!(c.train_tasks + c.eval_tasks, 50);
            for pair in c.epochs.windows(2) {
                assert!(pair[1].library_size >= pair[0].library_size);
            }
        }
        let epoch_tokens: u64 = r.cells.iter().flat_map(|c| &c.epochs).map(|e| e.tokens_used).sum();
        assert_eq!(r.tokens_used, r.setup_tokens + epoch_tokens);
        assert_eq!(r.tokens_used, r.setup_tokens + r.epochs.iter().map(|e| e.tokens_used).sum::<u64>());
    }

    #[test]
    fn single_fold_is_flagged_leaky() {
        let w = SyntheticWorld::generate(&WorldConfig::default()).unwrap();
        let config = RunConfig {
            folds: 1,
            ..small_config()
        };
        let r = run_kfold(&w, &config, &mock_providers(&[&w], &config)).unwrap();
        assert!(r.protocol.leaky);
        assert_eq!(r.cells[0].eval_tasks, 50);
        assert!((r.base_pass_rate - 0.4).abs() < 1e-12);
    }

    #[test]
    fn too_few_tasks_is_config_error() {
        let w = SyntheticWorld::generate(&WorldConfig {
            n_tasks: 2,
            ..WorldConfig::default()
        })
        .unwrap();
        let config = small_config();
        assert!(matches!(run_kfold(&w, &config, &mock_providers(&[&w], &config)), Err(Error::Config(_))));
    }

    #[test]
    fn evolve_world_grows_library() {
        let w = SyntheticWorld::generate(&WorldConfig::default()).unwrap();
        let config = small_config();
        let run = evolve_world(&w, &config, &mock_providers(&[&w], &config), None).unwrap();
        assert_eq!(run.score_rows.len(), 2);
        assert_eq!(run.library.epoch(), 2);
        let sizes: Vec<f64> = run.report.epochs.iter().map(|e| e.library_size).collect();
        assert_eq!(sizes.last().copied(), Some(run.library.len() as f64));
        assert!(sizes.windows(2).all(|p| p[1] > p[0]));
        assert!(run.report.protocol.leaky);
    }

    #[test]
    fn deterministic_apart_from_wall_clock() {
        let w = SyntheticWorld::generate(&WorldConfig::default()).unwrap();
        let config = small_config();
        let run = || {
            let mut r = run_kfold(&w, &config, &mock_providers(&[&w], &config)).unwrap();
            crate::harness::strip_wall_clock(&mut r);
            serde_json::to_string(&r).unwrap()
        };
        assert_eq!(run(), run());
    }
}
