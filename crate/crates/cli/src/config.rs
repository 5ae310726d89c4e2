//! Run configuration resolution: flag > env > JSON file > default.
//!
//! clap reads each flag and its `SKILLFORGE_*` variable, so by the time
//! [`RunArgs::resolve`] runs a `Some` field already means "flag or env".

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use skillforge::harness::{mock_providers, RunConfig, SyntheticWorld, WorldConfig};
use skillforge::providers::{HttpConfig, HttpProvider, MockChat, MockEmbedder, MockScorer};
use skillforge::{ChatModel, Providers, Strategy};

use crate::UsageError;

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file with any subset of the run configuration fields.
    #[arg(long, env = "SKILLFORGE_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "SKILLFORGE_EPOCHS")]
    pub epochs: Option<u32>,
    /// Fraction of scored candidates kept each epoch.
    #[arg(long, env = "SKILLFORGE_FILTER_RATIO")]
    pub filter_ratio: Option<f64>,
    /// greedy, primal_dual, lp_round or brute_force.
    #[arg(long, env = "SKILLFORGE_STRATEGY")]
    pub strategy: Option<String>,
    /// Cosine threshold for tag equivalence.
    #[arg(long, env = "SKILLFORGE_DELTA")]
    pub delta: Option<f64>,
    /// Skills retrieved per task.
    #[arg(long = "k", env = "SKILLFORGE_K")]
    pub retrieval_k: Option<usize>,
    #[arg(long, env = "SKILLFORGE_FOLDS")]
    pub folds: Option<usize>,
    #[arg(long, env = "SKILLFORGE_RUNS")]
    pub runs: Option<usize>,
    #[arg(long, env = "SKILLFORGE_SEED")]
    pub seed: Option<u64>,
    /// Fraction of the initial human skills kept.
    #[arg(long, env = "SKILLFORGE_LABEL_SCALE")]
    pub label_scale: Option<f64>,
    #[arg(long, env = "SKILLFORGE_CANDIDATES_PER_PAIR")]
    pub candidates_per_pair: Option<u32>,
    #[arg(long, env = "SKILLFORGE_THREADS")]
    pub threads: Option<usize>,
    /// Probability that a mock candidate is noisy.
    #[arg(long, env = "SKILLFORGE_NOISE_RATE")]
    pub noise_rate: Option<f64>,
    /// Use the offline mock providers. Never touches the network.
    #[arg(long, env = "SKILLFORGE_MOCK")]
    pub mock: bool,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! overlay {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        overlay!(
            epochs => c.epochs,
            filter_ratio => c.filter_ratio,
            delta => c.delta,
            retrieval_k => c.retrieval_k,
            folds => c.folds,
            runs => c.runs,
            seed => c.seed,
            label_scale => c.label_scale,
            candidates_per_pair => c.candidates_per_pair,
            threads => c.threads,
            noise_rate => c.mock.noise_rate,
        );
        if let Some(s) = &self.strategy {
            c.strategy = s.parse::<Strategy>().map_err(|e| UsageError(e.to_string()))?;
        }
        c.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct WorldArgs {
    /// World JSON written by `simworld`, or a world configuration JSON.
    /// Without it a default world is generated from the run seed.
    #[arg(long, value_name = "FILE")]
    pub world: Option<PathBuf>,
}

impl WorldArgs {
    pub fn load(&self, config: &RunConfig) -> Result<SyntheticWorld> {
        match &self.world {
            Some(path) => load_world(path),
            None => Ok(SyntheticWorld::generate(&WorldConfig::seeded(config.seed))?),
        }
    }
}

/// Reads a full world, or generates one from a world configuration.
pub fn load_world(path: &Path) -> Result<SyntheticWorld> {
    let text = fs::read_to_string(path).with_context(|| format!("reading world {}", path.display()))?;
    if let Ok(world) = serde_json::from_str::<SyntheticWorld>(&text) {
        return Ok(world);
    }
    let config: WorldConfig =
        serde_json::from_str(&text).map_err(|e| UsageError(format!("world {}: {e}", path.display())))?;
    Ok(SyntheticWorld::generate(&config)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    Http,
}

impl ProviderKind {
    pub fn from_mock(mock: bool) -> Self {
        if mock {
            ProviderKind::Mock
        } else {
            ProviderKind::Http
        }
    }
}

/// Providers for a run. Mock providers learn the vocabulary of `worlds`.
pub fn providers(kind: ProviderKind, worlds: &[&SyntheticWorld], config: &RunConfig) -> Providers {
    match kind {
        ProviderKind::Mock if worlds.is_empty() => Providers::new(
            Arc::new(MockChat::new(config.seed).with_noise_rate(config.mock.noise_rate)),
            Arc::new(MockEmbedder::new(config.seed)),
            Arc::new(MockScorer::with_bonus(config.seed, config.mock.scorer_bonus)),
        ),
        ProviderKind::Mock => mock_providers(worlds, config),
        ProviderKind::Http => {
            let http = Arc::new(HttpProvider::new(HttpConfig::from_env()));
            Providers::new(http.clone(), http.clone(), http)
        }
    }
}

pub fn chat(kind: ProviderKind, config: &RunConfig) -> Arc<dyn ChatModel> {
    match kind {
        ProviderKind::Mock => Arc::new(MockChat::new(config.seed)),
        ProviderKind::Http => Arc::new(HttpProvider::new(HttpConfig::from_env())),
    }
}

/// Everything needed to reproduce a run, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct Resolved<'a> {
    pub command: &'a str,
    pub providers: ProviderKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub http: Option<HttpConfig>,
    pub config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub world: Option<&'a WorldConfig>,
}

impl<'a> Resolved<'a> {
    pub fn new(command: &'a str, kind: ProviderKind, config: &'a RunConfig, world: Option<&'a WorldConfig>) -> Self {
        Self {
            command,
            providers: kind,
            http: (kind == ProviderKind::Http).then(HttpConfig::from_env),
            config,
            world,
        }
    }
}
