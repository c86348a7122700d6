use std::path::Path;

use nnkit::{timestep_embedding, Conv3d, Graph, GroupNorm, Linear, NnError, ParamId, ParamStore, ResBlock, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::process::NoisePredictor;
use crate::{DiffError, NoiseSchedule, ScheduleConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub channels: usize,
    pub groups: usize,
    pub blocks: usize,
    /// Channels of the design latent; the input carries twice this.
    pub latent_channels: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            channels: 48,
            groups: 8,
            blocks: 4,
            latent_channels: 4,
        }
    }
}

/// Architecture plus noise schedule of a latent diffusion model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdmConfig {
    pub denoiser: DenoiserConfig,
    pub schedule: ScheduleConfig,
}

impl LdmConfig {
    pub fn validate(&self) -> Result<(), DiffError> {
        let d = &self.denoiser;
        if d.channels == 0 || d.latent_channels == 0 || d.groups == 0 || d.channels % d.groups != 0 {
            return Err(DiffError::InvalidConfig(format!(
                "denoiser needs positive widths and channels divisible by groups, got {d:?}"
            )));
        }
        self.schedule.build().map(|_| ())
    }
}

/// Residual conv stack at latent resolution with a sinusoidal timestep
/// embedding fed to every block. The output layer starts at zero, so an
/// untrained network predicts zero noise.
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    conv_in: Conv3d,
    embed1: Linear,
    embed2: Linear,
    blocks: Vec<ResBlock>,
    norm_out: GroupNorm,
    conv_out: Conv3d,
}

impl Denoiser {
    pub fn new(store: &mut ParamStore<f32>, config: DenoiserConfig, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        let c = config.channels;
        let e = 2 * c;
        let conv_in = Conv3d::new(store, "denoiser.conv_in", 2 * config.latent_channels, c, 3, 1, rng)?;
        let embed1 = Linear::new(store, "denoiser.embed1", c, e, rng)?;
        let embed2 = Linear::new(store, "denoiser.embed2", e, e, rng)?;
        let blocks = (0..config.blocks)
            .map(|b| ResBlock::new(store, &format!("denoiser.block{b}"), c, config.groups, Some(e), rng))
            .collect::<Result<Vec<_>, _>>()?;
        let norm_out = GroupNorm::new(store, "denoiser.norm_out", c, config.groups)?;
        let conv_out = Conv3d::new(store, "denoiser.conv_out", c, config.latent_channels, 3, 1, rng)?;
        conv_out.zero(store);
        Ok(Self {
            config,
            conv_in,
            embed1,
            embed2,
            blocks,
            norm_out,
            conv_out,
        })
    }

    /// Predicted noise for `input = [condition, x_t]`.
    pub fn forward(&self, g: &mut Graph<f32>, store: &ParamStore<f32>, input: Var, t: &[usize]) -> Result<Var, NnError> {
        let shape = g.shape(input);
        if shape.len() != 5 || shape[1] != 2 * self.config.latent_channels || shape[0] != t.len() {
            return Err(NnError::ShapeMismatch {
                op: "denoiser",
                detail: format!("input {shape:?} with {} timesteps", t.len()),
            });
        }
        let steps: Vec<f64> = t.iter().map(|&s| s as f64).collect();
        let emb = g.constant(timestep_embedding(&steps, self.config.channels));
        let e = self.embed1.forward(g, store, emb)?;
        let e = g.silu(e);
        let e = self.embed2.forward(g, store, e)?;
        let e = g.silu(e);
        let mut h = self.conv_in.forward(g, store, input)?;
        for b in &self.blocks {
            h = b.forward(g, store, h, Some(e))?;
        }
        let h = self.norm_out.forward(g, store, h)?;
        let h = g.silu(h);
        self.conv_out.forward(g, store, h)
    }
}

/// A denoiser with its weights, schedule and the latent scale factors that
/// map encoder latents to roughly unit second moment.
#[derive(Debug, Clone)]
pub struct LatentDiffusion {
    pub config: LdmConfig,
    pub store: ParamStore<f32>,
    pub denoiser: Denoiser,
    pub schedule: NoiseSchedule,
    design_scale: ParamId,
    condition_scale: ParamId,
}

impl LatentDiffusion {
    pub fn new(config: LdmConfig, seed: u64) -> Result<Self, DiffError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let denoiser = Denoiser::new(&mut store, config.denoiser.clone(), &mut rng)?;
        // stored with the weights but never receive gradients
        let design_scale = store.add("latent.design_scale", Tensor::full(&[1], 1.0))?;
        let condition_scale = store.add("latent.condition_scale", Tensor::full(&[1], 1.0))?;
        let schedule = config.schedule.build()?;
        Ok(Self {
            config,
            store,
            denoiser,
            schedule,
            design_scale,
            condition_scale,
        })
    }

    pub fn load(config: LdmConfig, path: &Path) -> Result<Self, DiffError> {
        let mut m = Self::new(config, 0)?;
        m.store.assign_from(&nnkit::load_checkpoint(path)?)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffError> {
        Ok(nnkit::save_checkpoint(&self.store, path)?)
    }

    /// `(design, condition)` multipliers applied before diffusion.
    pub fn scales(&self) -> (f32, f32) {
        (self.store.get(self.design_scale).data()[0], self.store.get(self.condition_scale).data()[0])
    }

    pub fn set_scales(&mut self, design: f32, condition: f32) {
        self.store.get_mut(self.design_scale).data_mut()[0] = design;
        self.store.get_mut(self.condition_scale).data_mut()[0] = condition;
    }

    pub fn scale_condition(&self, cond: &Tensor<f32>) -> Tensor<f32> {
        let s = self.scales().1;
        cond.map(|v| v * s)
    }

    /// Design latents `[n, c, ...]` for one encoder condition latent.
    pub fn generate(&self, cond: &Tensor<f32>, n: usize, seed: u64, trajectory: bool) -> Result<crate::Generation, NnError> {
        let mut out = crate::generate(self, &self.schedule, &self.scale_condition(cond), n, seed, trajectory)?;
        let inv = 1.0 / self.scales().0;
        out.latents = out.latents.map(|v| v * inv);
        for s in &mut out.trajectory {
            *s = s.map(|v| v * inv);
        }
        Ok(out)
    }

    /// Edits a posterior mean; strength 0 returns it bit for bit.
    pub fn translate(&self, mean: &Tensor<f32>, cond: &Tensor<f32>, strength: f64, seed: u64) -> Result<Tensor<f32>, NnError> {
        if self.schedule.start_step(strength) == 0 && (0.0..=1.0).contains(&strength) {
            return Ok(mean.clone());
        }
        let s = self.scales().0;
        let x = crate::translate(self, &self.schedule, &mean.map(|v| v * s), &self.scale_condition(cond), strength, seed)?;
        Ok(x.map(|v| v / s))
    }
}

impl NoisePredictor for LatentDiffusion {
    fn predict(&self, input: &Tensor<f32>, t: &[usize]) -> Result<Tensor<f32>, NnError> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let y = self.denoiser.forward(&mut g, &self.store, x, t)?;
        Ok(g.value(y).clone())
    }
}

