mod common;

use std::ops::ControlFlow;

use common::synthetic;
use genvae::{Vae, VaeConfig, VaeTrainConfig};
use pipeline::{multigrid_schedule, StageData};

fn tiny() -> VaeConfig {
    VaeConfig {
        base_channels: 4,
        groups: 2,
        codebook_size: 16,
        ..Default::default()
    }
}

fn train_cfg() -> VaeTrainConfig {
    VaeTrainConfig {
        batch_size: 2,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn coarse_heavy_plan_resumes_from_the_checkpoint_at_the_fine_grid() {
    let coarse = synthetic(8, 4);
    let fine = synthetic(16, 2);
    let ids: Vec<u64> = (0..4).collect();
    let stages = [
        StageData {
            dataset: &coarse,
            train_ids: &ids,
            val_ids: &[],
            epochs: 10,
        },
        StageData {
            dataset: &fine,
            train_ids: &ids[..2],
            val_ids: &ids[..1],
            epochs: 1,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("vae.ckpt");
    let mut seen = Vec::new();
    let (vae, log) = multigrid_schedule(&tiny(), &train_cfg(), &stages, &ckpt, 1, |s, e| {
        seen.push((s, e.epoch));
        ControlFlow::Continue(())
    })
    .unwrap();
    assert_eq!(log.plan.iter().map(|p| p.epochs).collect::<Vec<_>>(), vec![10, 1]);
    assert_eq!(log.plan[0].grid, [8, 8, 8]);
    assert_eq!(log.plan[1].grid, [16, 16, 16]);
    assert_eq!(log.stages.iter().map(|s| s.log.epochs.len()).collect::<Vec<_>>(), vec![10, 1]);
    assert_eq!(log.stages.iter().map(|s| s.resumed).collect::<Vec<_>>(), vec![false, true]);
    assert_eq!(seen.len(), 11);
    assert!(log.stages[1].log.epochs[0].val_recon.unwrap().is_finite());
    // the final checkpoint holds the returned weights
    let reloaded = Vae::load(tiny(), &ckpt).unwrap();
    assert_eq!(
        nnkit::checkpoint_bytes(&reloaded.store).unwrap(),
        nnkit::checkpoint_bytes(&vae.store).unwrap()
    );
}

#[test]
fn callback_can_end_a_stage_early() {
    let coarse = synthetic(8, 2);
    let ids = [0, 1];
    let stages = [
        StageData {
            dataset: &coarse,
            train_ids: &ids,
            val_ids: &[],
            epochs: 5,
        },
        StageData {
            dataset: &coarse,
            train_ids: &ids,
            val_ids: &[],
            epochs: 3,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let (_, log) = multigrid_schedule(&tiny(), &train_cfg(), &stages, &dir.path().join("v.ckpt"), 1, |s, e| {
        if s == 0 && e.epoch == 1 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(log.stages.iter().map(|s| s.log.epochs.len()).collect::<Vec<_>>(), vec![2, 3]);
}

#[test]
fn empty_plan_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let r = multigrid_schedule(&tiny(), &train_cfg(), &[], &dir.path().join("v.ckpt"), 1, |_, _| ControlFlow::Continue(()));
    assert!(r.is_err());
}
