//! Experiment orchestration over a synthetic task world: the epoch loop, the
//! k-fold protocol, parameter sweeps and scorer-sensitivity analysis.
//!
//! The world's success rule is an artifact construction. A task passes when
//! the retrieved skills' tag classes cover its hidden required tags.

mod agent;
mod epoch;
mod kfold;
mod report;
mod sensitivity;
mod sweep;
mod world;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cover::Strategy;
use crate::error::{Error, Result};
use crate::providers::{MockChat, MockEmbedder, MockScorer, Providers};
use crate::retrieval::DEFAULT_RETRIEVAL_K;
use crate::scoring::{validate_ratio, DEFAULT_FILTER_RATIO};
use crate::tags::DEFAULT_DELTA;

pub use agent::{simulate_agent, SUCCESS_RULE};
pub use epoch::{evaluate_tasks, evolve_step, pass_rate, run_epoch, EpochOutcome, EpochState, StepStats};
pub use kfold::{evolve_world, fold_assignment, prepare_state, run_kfold, EvolveRun, run_transfer, CellReport, EpochRow, EpochSummary, EvolutionReport, Protocol};
pub use report::{
    csv_string, emit_report, render_markdown, render_sweep_markdown, strip_wall_clock, write_rows_csv, write_sweep_csv, REPORT_VERSION,
};
pub use sensitivity::{run_sensitivity, scorer_sensitivity, spearman, SensitivityRow};
pub use sweep::{sweep, SweepDimension, SweepRow, SweepTable};
pub use world::{SyntheticWorld, WorldConfig, WorldTask};

pub const DEFAULT_EPOCHS: u32 = 3;
pub const DEFAULT_FOLDS: usize = 3;
pub const DEFAULT_RUNS: usize = 3;
pub const DEFAULT_THREADS: usize = 4;

/// Knobs of the mock providers used for offline runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockSettings {
    /// Probability that a generated candidate is noisy.
    pub noise_rate: f64,
    /// Fraction of uncovered tags a clean candidate carries over.
    pub uncovered_keep: f64,
    pub scorer_bonus: f64,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self {
            noise_rate: 0.0,
            uncovered_keep: 1.0,
            scorer_bonus: crate::providers::mock::DEFAULT_CONDITION_BONUS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub epochs: u32,
    pub filter_ratio: f64,
    pub strategy: Strategy,
    pub delta: f64,
    pub retrieval_k: usize,
    pub folds: usize,
    pub runs: usize,
    pub seed: u64,
    /// Fraction of the initial human skills kept.
    pub label_scale: f64,
    pub candidates_per_pair: u32,
    pub threads: usize,
    pub mock: MockSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            filter_ratio: DEFAULT_FILTER_RATIO,
            strategy: Strategy::Greedy,
            delta: DEFAULT_DELTA,
            retrieval_k: DEFAULT_RETRIEVAL_K,
            folds: DEFAULT_FOLDS,
            runs: DEFAULT_RUNS,
            seed: 0,
            label_scale: 1.0,
            candidates_per_pair: 1,
            threads: DEFAULT_THREADS,
            mock: MockSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        validate_ratio(self.filter_ratio)?;
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!("delta {} must lie in (0, 1]", self.delta)));
        }
        if self.retrieval_k == 0 {
            return Err(Error::Config("retrieval k must be at least 1".into()));
        }
        if self.folds == 0 || self.runs == 0 {
            return Err(Error::Config("folds and runs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.label_scale) {
            return Err(Error::Config(format!("label scale {} must lie in [0, 1]", self.label_scale)));
        }
        if self.candidates_per_pair == 0 {
            return Err(Error::Config("candidates per pair must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let m = &self.mock;
        if !(0.0..=1.0).contains(&m.noise_rate) || !(0.0..=1.0).contains(&m.uncovered_keep) {
            return Err(Error::Config("mock noise rate and keep fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Runs `f` on a pool of `threads` workers.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Mock providers that know the tag vocabulary of `worlds`.
pub fn mock_providers(worlds: &[&SyntheticWorld], config: &RunConfig) -> Providers {
    let vocab = worlds.iter().flat_map(|w| w.tag_universe.iter().cloned());
    let distractors = worlds.iter().flat_map(|w| w.distractors.iter().cloned());
    let chat = MockChat::new(config.seed)
        .with_vocabulary(vocab)
        .with_distractors(distractors)
        .with_noise_rate(config.mock.noise_rate)
        .with_uncovered_keep(config.mock.uncovered_keep);
    Providers::new(
        Arc::new(chat),
        Arc::new(MockEmbedder::new(config.seed)),
        Arc::new(MockScorer::with_bonus(config.seed, config.mock.scorer_bonus)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.epochs, c.filter_ratio, c.delta, c.retrieval_k, c.folds, c.runs), (3, 0.2, 0.9, 5, 3, 3));
        assert_eq!(c.strategy, Strategy::Greedy);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            RunConfig { filter_ratio: 0.0, ..RunConfig::default() },
            RunConfig { delta: 1.5, ..RunConfig::default() },
            RunConfig { folds: 0, ..RunConfig::default() },
            RunConfig { label_scale: -0.1, ..RunConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"epochs": 5, "mock": {"noise_rate": 0.5}}"#).unwrap();
        assert_eq!(c.epochs, 5);
        assert_eq!(c.folds, 3);
        assert_eq!(c.mock.noise_rate, 0.5);
        assert_eq!(c.mock.uncovered_keep, 1.0);
    }
}
