use std::ops::ControlFlow;
use std::path::Path;

use genvae::data::{sample_batch, select};
use genvae::{GaussianPosterior, Vae};
use nnkit::{adam_step, Graph, OptimizerConfig, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use simpgen::Dataset;

use crate::process::{concat_channels, ddpm_loss_with, q_sample_batch, standard_normal};
use crate::{DiffError, LatentDiffusion, LdmConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for LdmTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 16,
            optimizer: OptimizerConfig {
                lr: 1e-3,
                ..Default::default()
            },
            seed: 0,
        }
    }
}

/// Encoder outputs of a set of samples, computed once with the frozen VAE.
#[derive(Debug, Clone)]
pub struct EncodedSet {
    /// Quantized condition latents, one `[1, c, ...]` per sample.
    pub conditions: Vec<Tensor<f32>>,
    pub posteriors: Vec<GaussianPosterior>,
}

impl EncodedSet {
    pub fn encode(vae: &Vae, dataset: &Dataset, ids: &[u64]) -> Result<Self, DiffError> {
        let mut conditions = Vec::with_capacity(ids.len());
        let mut posteriors = Vec::with_capacity(ids.len());
        for &id in ids {
            let (cond, dens) = sample_batch(&dataset.dims, &select(dataset, &[id]))?;
            conditions.push(vae.encode_condition(&cond)?.latent);
            posteriors.push(vae.encode_design(&dens)?);
        }
        Ok(Self { conditions, posteriors })
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    /// Reciprocal root-mean-square of the posterior means and of the
    /// condition latents.
    pub fn scales(&self) -> (f32, f32) {
        let rms = |ts: &mut dyn Iterator<Item = &Tensor<f32>>| {
            let (mut s, mut n) = (0.0f64, 0usize);
            for t in ts {
                s += t.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
                n += t.len();
            }
            let r = (s / n.max(1) as f64).sqrt();
            if r > 1e-12 {
                (1.0 / r) as f32
            } else {
                1.0
            }
        };
        (rms(&mut self.posteriors.iter().map(|p| &p.mu)), rms(&mut self.conditions.iter()))
    }

    /// Scaled `(x₀, condition)` batch; `x₀` is drawn from the posteriors
    /// when `rng` is given and is the posterior mean otherwise.
    fn batch<R: Rng>(&self, idx: &[usize], scales: (f32, f32), rng: Option<&mut R>) -> Result<(Tensor<f32>, Tensor<f32>), DiffError> {
        let mut x0 = Vec::new();
        let mut cond = Vec::new();
        let mut rng = rng;
        for &i in idx {
            let z = match rng.as_deref_mut() {
                Some(r) => self.posteriors[i].sample(r),
                None => self.posteriors[i].mu.clone(),
            };
            x0.extend(z.data().iter().map(|v| v * scales.0));
            cond.extend(self.conditions[i].data().iter().map(|v| v * scales.1));
        }
        let mut shape = self.conditions[0].shape().to_vec();
        shape[0] = idx.len();
        Ok((Tensor::new(&shape, x0)?, Tensor::new(&shape, cond)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdmEpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    /// Loss on the validation set with fixed timesteps and noise.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LdmTrainLog {
    pub train_samples: usize,
    pub design_scale: f32,
    pub condition_scale: f32,
    /// Validation loss of the untrained (zero-output) denoiser.
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<LdmEpochLog>,
}

impl LdmTrainLog {
    pub fn save(&self, path: &Path) -> Result<(), DiffError> {
        let json = serde_json::to_string_pretty(self).expect("log serializes");
        std::fs::write(path, json).map_err(|source| DiffError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Noise-prediction loss over a whole encoded set, using posterior means,
/// one timestep per sample and noise fixed by `seed`.
pub fn evaluate_ldm(model: &LatentDiffusion, set: &EncodedSet, seed: u64) -> Result<f64, DiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = model.scales();
    let (mut total, mut count) = (0.0, 0usize);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(32) {
        let (x0, cond) = set.batch::<ChaCha8Rng>(chunk, scales, None)?;
        let t: Vec<usize> = chunk.iter().map(|_| rng.gen_range(1..=model.schedule.steps())).collect();
        let z = standard_normal(x0.shape(), &mut rng);
        total += ddpm_loss_with(model, &model.schedule, &x0, &cond, &t, &z)? * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Fits a fresh diffusion model to the design latents of `train` (sampled
/// from their posteriors every step) given their condition latents. The
/// VAE is only read.
pub fn train_ldm(
    config: LdmConfig,
    train: &EncodedSet,
    val: Option<&EncodedSet>,
    cfg: &LdmTrainConfig,
    mut on_epoch: impl FnMut(&LdmEpochLog) -> ControlFlow<()>,
) -> Result<(LatentDiffusion, LdmTrainLog), DiffError> {
    if train.is_empty() || cfg.batch_size == 0 {
        return Err(DiffError::InvalidConfig("need training samples and a positive batch size".into()));
    }
    cfg.optimizer.validate()?;
    let mut model = LatentDiffusion::new(config, cfg.seed)?;
    let (ds, cs) = train.scales();
    model.set_scales(ds, cs);
    let val_seed = cfg.seed ^ 0x5eed;
    let mut log = LdmTrainLog {
        train_samples: train.len(),
        design_scale: ds,
        condition_scale: cs,
        initial_val_loss: val.map(|v| evaluate_ldm(&model, v, val_seed)).transpose()?,
        epochs: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let steps = model.schedule.steps();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x0, cond) = train.batch(chunk, (ds, cs), Some(&mut rng))?;
            let t: Vec<usize> = chunk.iter().map(|_| rng.gen_range(1..=steps)).collect();
            let z = standard_normal(x0.shape(), &mut rng);
            let xt = q_sample_batch(&model.schedule, &x0, &t, &z)?;
            let mut g = Graph::new();
            let input = g.constant(concat_channels(&cond, &xt)?);
            let pred = model.denoiser.forward(&mut g, &model.store, input, &t)?;
            let target = g.constant(z);
            let err = g.sub(pred, target)?;
            let err = g.square(err);
            let loss = g.mean(err);
            g.backward(loss)?;
            let grads = g.param_grads(&model.store);
            adam_step(&mut model.store, &grads, &cfg.optimizer)?;
            sum += g.value(loss).data()[0] as f64 * chunk.len() as f64;
        }
        let entry = LdmEpochLog {
            epoch,
            loss: sum / order.len() as f64,
            val_loss: val.map(|v| evaluate_ldm(&model, v, val_seed)).transpose()?,
        };
        log::info!("ldm epoch {epoch}: loss {:.4} val {:?}", entry.loss, entry.val_loss);
        let flow = on_epoch(&entry);
        log.epochs.push(entry);
        if flow.is_break() {
            break;
        }
    }
    Ok((model, log))
}
