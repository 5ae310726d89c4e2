use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::kfold::run_protocol;
use super::report::REPORT_VERSION;
use super::world::{SyntheticWorld, WorldConfig};
use super::{mock_providers, RunConfig};

pub const EPOCH_GRID: u32 = 5;
pub const RATIO_GRID: [f64; 4] = [0.1, 0.2, 0.5, 1.0];
pub const LABEL_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Tag overlap between the two transfer worlds.
pub const TRANSFER_OVERLAP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDimension {
    Epochs,
    FilterRatio,
    LabelScale,
    Transfer,
}

impl SweepDimension {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepDimension::Epochs => "epochs",
            SweepDimension::FilterRatio => "filter_ratio",
            SweepDimension::LabelScale => "label_scale",
            SweepDimension::Transfer => "transfer",
        }
    }
}

impl fmt::Display for SweepDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepDimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "epochs" => Ok(Self::Epochs),
            "filter_ratio" | "ratio" => Ok(Self::FilterRatio),
            "label_scale" => Ok(Self::LabelScale),
            "transfer" => Ok(Self::Transfer),
            other => Err(Error::Config(format!("unknown sweep dimension {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dimension: String,
    pub setting: String,
    pub train_world: String,
    pub eval_world: String,
    pub epochs: u32,
    pub base_pass_rate: f64,
    pub pass_rate: f64,
    pub pass_rate_std: f64,
    pub library_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub report_version: u32,
    pub dimension: SweepDimension,
    pub config: RunConfig,
    pub world: WorldConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, setting: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }
}

fn cell(
    dimension: SweepDimension,
    setting: String,
    train: &SyntheticWorld,
    eval: &SyntheticWorld,
    config: &RunConfig,
) -> Result<SweepRow> {
    let providers = mock_providers(&[train, eval], config);
    let r = run_protocol(train, eval, config, &providers)?;
    let last = r.epochs.last().expect("epoch 0 is always present");
    Ok(SweepRow {
        dimension: dimension.as_str().into(),
        setting,
        train_world: train.name().into(),
        eval_world: eval.name().into(),
        epochs: config.epochs,
        base_pass_rate: r.base_pass_rate,
        pass_rate: last.pass_rate,
        pass_rate_std: last.pass_rate_std,
        library_size: last.library_size,
    })
}

/// Reruns the k-fold protocol over one grid with mock providers.
///
/// The epoch sweep is a single five-epoch run read off at every epoch; the
/// per-epoch numbers are the same as separate runs because epoch `e` never
/// depends on how many epochs follow it.
pub fn sweep(config: &RunConfig, world: &WorldConfig, dimension: SweepDimension) -> Result<SweepTable> {
    config.validate()?;
    let a = SyntheticWorld::generate(world)?;
    let rows = config.install(|| -> Result<Vec<SweepRow>> {
        match dimension {
            SweepDimension::Epochs => {
                let cfg = RunConfig {
                    epochs: EPOCH_GRID,
                    ..config.clone()
                };
                let r = run_protocol(&a, &a, &cfg, &mock_providers(&[&a], &cfg))?;
                Ok(r.epochs
                    .iter()
                    .map(|e| SweepRow {
                        dimension: dimension.as_str().into(),
                        setting: e.epoch.to_string(),
                        train_world: a.name().into(),
                        eval_world: a.name().into(),
                        epochs: e.epoch,
                        base_pass_rate: r.base_pass_rate,
                        pass_rate: e.pass_rate,
                        pass_rate_std: e.pass_rate_std,
                        library_size: e.library_size,
                    })
                    .collect())
            }
            SweepDimension::FilterRatio => RATIO_GRID
                .par_iter()
                .map(|&ratio| {
                    let cfg = RunConfig {
                        filter_ratio: ratio,
                        ..config.clone()
                    };
                    cell(dimension, ratio.to_string(), &a, &a, &cfg)
                })
                .collect(),
            SweepDimension::LabelScale => LABEL_GRID
                .par_iter()
                .map(|&scale| {
                    let cfg = RunConfig {
                        label_scale: scale,
                        ..config.clone()
                    };
                    cell(dimension, scale.to_string(), &a, &a, &cfg)
                })
                .collect(),
            SweepDimension::Transfer => {
                let b = SyntheticWorld::generate(&world.shifted("b", TRANSFER_OVERLAP))?;
                let pairs = [(&a, &a), (&a, &b), (&b, &a), (&b, &b)];
                pairs
                    .par_iter()
                    .map(|(t, e)| cell(dimension, format!("{}->{}", t.name(), e.name()), t, e, config))
                    .collect()
            }
        }
    })??;
    Ok(SweepTable {
        report_version: REPORT_VERSION,
        dimension,
        config: config.clone(),
        world: world.clone(),
        rows,
    })
}
