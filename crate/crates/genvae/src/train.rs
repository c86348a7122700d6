use std::ops::ControlFlow;
use std::path::Path;

use nnkit::{adam_step, Graph, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use simpgen::Dataset;

use crate::data::{sample_batch, select};
use crate::loss::{vae_loss_nodes, LossWeights, VaeLossReport};
use crate::{Vae, VaeError, VaeTrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Batch-size weighted training averages.
    pub train: VaeLossReport,
    /// Distinct codes selected during the epoch.
    pub codebook_usage: usize,
    pub reseeded_codes: usize,
    /// Held-out L1 error decoding the posterior mean.
    pub val_recon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub grid: [usize; 3],
    pub train_samples: usize,
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn save(&self, path: &Path) -> Result<(), VaeError> {
        let json = serde_json::to_string_pretty(self).expect("log serializes");
        std::fs::write(path, json).map_err(|e| VaeError::io(path, e))
    }
}

/// L1 error of reconstructions from the posterior mean and quantized
/// condition, averaged over voxels of all samples.
pub fn reconstruction_error(vae: &Vae, dataset: &Dataset, ids: &[u64], batch_size: usize) -> Result<f64, VaeError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in ids.chunks(batch_size.max(1)) {
        let (cond, dens) = sample_batch(&dataset.dims, &select(dataset, chunk))?;
        let q = vae.encode_condition(&cond)?;
        let post = vae.encode_design(&dens)?;
        let out = vae.decode(&q.latent, &post.mu)?;
        total += out.data().iter().zip(dens.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>();
        count += out.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Trains all three networks jointly. `on_epoch` sees each finished epoch
/// and may stop training early.
pub fn train_vae(
    vae: &mut Vae,
    dataset: &Dataset,
    train_ids: &[u64],
    val_ids: &[u64],
    cfg: &VaeTrainConfig,
    mut on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<TrainLog, VaeError> {
    cfg.validate()?;
    if train_ids.is_empty() {
        return Err(VaeError::InvalidConfig("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = LossWeights {
        kl: cfg.kl_weight,
        commitment: cfg.commitment,
    };
    let k = vae.config.codebook_size;
    let d = vae.config.latent_channels;
    let mut idle_epochs = vec![0usize; k];
    let mut log = TrainLog {
        grid: crate::data::grid_shape(&dataset.dims),
        train_samples: train_ids.len(),
        epochs: Vec::new(),
    };
    let mut order = train_ids.to_vec();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut used = vec![false; k];
        let mut report = VaeLossReport::default();
        let mut reservoir: Vec<f32> = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let (cond, dens) = sample_batch(&dataset.dims, &select(dataset, chunk))?;
            let mut g = Graph::new();
            let c = g.constant(cond);
            let x = g.constant(dens);
            let (nodes, batch_report) = vae_loss_nodes(vae, &mut g, c, x, weights, None, &mut rng)?;
            g.backward(nodes.total)?;
            let grads = g.param_grads(&vae.store);
            adam_step(&mut vae.store, &grads, &cfg.optimizer)?;
            report.accumulate(&batch_report, chunk.len() as f64 / order.len() as f64);
            for &i in &nodes.indices {
                used[i] = true;
            }
            reservoir = latent_vectors(g.value(nodes.continuous_condition), d);
        }
        let mut reseeded = 0;
        for (code, idle) in idle_epochs.iter_mut().enumerate() {
            *idle = if used[code] { 0 } else { *idle + 1 };
            if cfg.dead_code_epochs > 0 && *idle >= cfg.dead_code_epochs && !reservoir.is_empty() {
                let pick = rng.gen_range(0..reservoir.len() / d);
                let row = reservoir[pick * d..(pick + 1) * d].to_vec();
                vae.store.get_mut(vae.codebook).data_mut()[code * d..(code + 1) * d].copy_from_slice(&row);
                *idle = 0;
                reseeded += 1;
            }
        }
        let val_recon = if val_ids.is_empty() {
            None
        } else {
            Some(reconstruction_error(vae, dataset, val_ids, cfg.batch_size)?)
        };
        let entry = EpochLog {
            epoch,
            train: report,
            codebook_usage: used.iter().filter(|&&u| u).count(),
            reseeded_codes: reseeded,
            val_recon,
        };
        log::info!(
            "vae epoch {epoch}: recon {:.4} kl {:.3} vq {:.4}/{:.4} codes {} val {:?}",
            report.recon,
            report.kl,
            report.vq_codebook,
            report.vq_commit,
            entry.codebook_usage,
            val_recon
        );
        let flow = on_epoch(&entry);
        log.epochs.push(entry);
        if flow.is_break() {
            break;
        }
    }
    Ok(log)
}

/// Latent vectors of `[n, d, spatial...]`, one `d`-row per voxel.
fn latent_vectors(z: &Tensor<f32>, d: usize) -> Vec<f32> {
    let n = z.shape()[0];
    let spatial = z.len() / (n * d);
    let mut out = Vec::with_capacity(z.len());
    for i in 0..n {
        for s in 0..spatial {
            for c in 0..d {
                out.push(z.data()[(i * d + c) * spatial + s]);
            }
        }
    }
    out
}
