//! Coarse-to-fine VAE training: train on a low-resolution dataset, reload
//! the saved weights and continue on finer grids. Works because every
//! parameter shape is independent of the grid size.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use genvae::{train_vae, EpochLog, TrainLog, Vae, VaeConfig, VaeTrainConfig};
use serde::{Deserialize, Serialize};
use simpgen::{sample_seed, Dataset};

use crate::PipelineError;

/// Training data and epoch budget of one stage.
#[derive(Debug, Clone, Copy)]
pub struct StageData<'a> {
    pub dataset: &'a Dataset,
    pub train_ids: &'a [u64],
    pub val_ids: &'a [u64],
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedStage {
    pub grid: [usize; 3],
    pub epochs: usize,
    pub train_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: usize,
    /// Whether the stage started from the previous stage's checkpoint.
    pub resumed: bool,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultigridLog {
    pub plan: Vec<PlannedStage>,
    pub checkpoint: PathBuf,
    pub stages: Vec<StageLog>,
}

impl MultigridLog {
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self).expect("log serializes");
        std::fs::write(path, json).map_err(|e| PipelineError::io(path, e))
    }
}

/// Runs the stages in order from a fresh model seeded with `init_seed`.
/// After each stage the weights are written to `checkpoint`; the next stage
/// reloads them from disk. `on_epoch` receives the stage index and may stop
/// the current stage early.
pub fn multigrid_schedule(
    vae_config: &VaeConfig,
    train_config: &VaeTrainConfig,
    stages: &[StageData],
    checkpoint: &Path,
    init_seed: u64,
    mut on_epoch: impl FnMut(usize, &EpochLog) -> ControlFlow<()>,
) -> Result<(Vae, MultigridLog), PipelineError> {
    if stages.is_empty() {
        return Err(PipelineError::InvalidConfig("multigrid plan has no stages".into()));
    }
    let mut log = MultigridLog {
        plan: stages
            .iter()
            .map(|s| PlannedStage {
                grid: genvae::data::grid_shape(&s.dataset.dims),
                epochs: s.epochs,
                train_samples: s.train_ids.len(),
            })
            .collect(),
        checkpoint: checkpoint.to_path_buf(),
        stages: Vec::new(),
    };
    log::info!("multigrid plan {:?}", log.plan);
    let mut vae = Vae::new(vae_config.clone(), init_seed)?;
    for (i, stage) in stages.iter().enumerate() {
        if i > 0 {
            vae = Vae::load(vae_config.clone(), checkpoint)?;
        }
        let cfg = VaeTrainConfig {
            epochs: stage.epochs,
            seed: sample_seed(train_config.seed, i as u64),
            ..train_config.clone()
        };
        let stage_log = train_vae(&mut vae, stage.dataset, stage.train_ids, stage.val_ids, &cfg, |e| on_epoch(i, e))?;
        vae.save(checkpoint)?;
        log.stages.push(StageLog {
            stage: i,
            resumed: i > 0,
            log: stage_log,
        });
    }
    Ok((vae, log))
}
