//! The two encoder heads and the shared decoder.

use std::path::Path;

use nnkit::{Conv3d, Graph, GroupNorm, NnError, ParamId, ParamStore, ResBlock, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::quantize::{lookup, nearest_codes};
use crate::{VaeConfig, VaeError};

/// Bounds applied to the predicted log-variance.
pub const LOGVAR_RANGE: (f64, f64) = (-30.0, 20.0);

/// Total downsampling factor between a voxel grid and its latents.
pub const LATENT_STRIDE: usize = 4;

#[derive(Debug, Clone)]
struct Encoder {
    conv_in: Conv3d,
    levels: Vec<(Vec<ResBlock>, Option<Conv3d>)>,
    norm_out: GroupNorm,
    conv_out: Conv3d,
}

impl Encoder {
    fn new(store: &mut ParamStore<f32>, name: &str, cfg: &VaeConfig, out: usize, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        let c = cfg.base_channels;
        let widths = [c, 2 * c, 2 * c];
        let conv_in = Conv3d::new(store, &format!("{name}.conv_in"), 1, c, 3, 1, rng)?;
        let mut levels = Vec::new();
        for (l, &w) in widths.iter().enumerate() {
            let blocks = (0..cfg.blocks_per_level)
                .map(|b| ResBlock::new(store, &format!("{name}.level{l}.block{b}"), w, cfg.groups, None, rng))
                .collect::<Result<Vec<_>, _>>()?;
            let down = match widths.get(l + 1) {
                Some(&next) => Some(Conv3d::new(store, &format!("{name}.level{l}.down"), w, next, 3, 2, rng)?),
                None => None,
            };
            levels.push((blocks, down));
        }
        let norm_out = GroupNorm::new(store, &format!("{name}.norm_out"), 2 * c, cfg.groups)?;
        let conv_out = Conv3d::new(store, &format!("{name}.conv_out"), 2 * c, out, 3, 1, rng)?;
        Ok(Self {
            conv_in,
            levels,
            norm_out,
            conv_out,
        })
    }

    fn forward(&self, g: &mut Graph<f32>, store: &ParamStore<f32>, x: Var) -> Result<Var, NnError> {
        let mut h = self.conv_in.forward(g, store, x)?;
        for (blocks, down) in &self.levels {
            for b in blocks {
                h = b.forward(g, store, h, None)?;
            }
            if let Some(d) = down {
                h = d.forward(g, store, h)?;
            }
        }
        let h = self.norm_out.forward(g, store, h)?;
        let h = g.silu(h);
        self.conv_out.forward(g, store, h)
    }
}

#[derive(Debug, Clone)]
struct Decoder {
    conv_in: Conv3d,
    coarse: Vec<ResBlock>,
    up_mid: Conv3d,
    mid: Vec<ResBlock>,
    up_fine: Conv3d,
    fine: Vec<ResBlock>,
    norm_out: GroupNorm,
    conv_out: Conv3d,
}

impl Decoder {
    fn new(store: &mut ParamStore<f32>, cfg: &VaeConfig, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        let c = cfg.base_channels;
        let mut blocks = |store: &mut ParamStore<f32>, level: &str, w: usize| {
            (0..cfg.blocks_per_level)
                .map(|b| ResBlock::new(store, &format!("decoder.{level}.block{b}"), w, cfg.groups, None, rng))
                .collect::<Result<Vec<_>, _>>()
        };
        let coarse = blocks(store, "coarse", 2 * c)?;
        let mid = blocks(store, "mid", 2 * c)?;
        let fine = blocks(store, "fine", c)?;
        let conv_in = Conv3d::new(store, "decoder.conv_in", 2 * cfg.latent_channels, 2 * c, 3, 1, rng)?;
        let up_mid = Conv3d::new(store, "decoder.up_mid", 2 * c, 2 * c, 3, 1, rng)?;
        let up_fine = Conv3d::new(store, "decoder.up_fine", 2 * c, c, 3, 1, rng)?;
        let norm_out = GroupNorm::new(store, "decoder.norm_out", c, cfg.groups)?;
        let conv_out = Conv3d::new(store, "decoder.conv_out", c, 1, 3, 1, rng)?;
        Ok(Self {
            conv_in,
            coarse,
            up_mid,
            mid,
            up_fine,
            fine,
            norm_out,
            conv_out,
        })
    }

    /// Returns logits; the density is their sigmoid.
    fn forward(&self, g: &mut Graph<f32>, store: &ParamStore<f32>, z: Var) -> Result<Var, NnError> {
        let mut h = self.conv_in.forward(g, store, z)?;
        for b in &self.coarse {
            h = b.forward(g, store, h, None)?;
        }
        h = g.upsample2(h)?;
        h = self.up_mid.forward(g, store, h)?;
        for b in &self.mid {
            h = b.forward(g, store, h, None)?;
        }
        // project to the narrow width before upsampling; the fine level is the expensive one
        h = self.up_fine.forward(g, store, h)?;
        h = g.upsample2(h)?;
        for b in &self.fine {
            h = b.forward(g, store, h, None)?;
        }
        let h = self.norm_out.forward(g, store, h)?;
        let h = g.silu(h);
        self.conv_out.forward(g, store, h)
    }
}

/// Graph nodes produced by the condition head.
#[derive(Debug, Clone)]
pub struct ConditionNodes {
    /// Quantized latent with straight-through gradients to the encoder.
    pub latent: Var,
    /// Encoder output before quantization.
    pub continuous: Var,
    pub indices: Vec<usize>,
    /// `mean((sg(z_e) - z_q)²)`, trains the codebook.
    pub codebook_loss: Var,
    /// `mean((z_e - sg(z_q))²)`, unweighted.
    pub commit_loss: Var,
}

/// Quantized condition latent outside a training graph.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedCondition {
    pub latent: Tensor<f32>,
    pub indices: Vec<usize>,
    pub codebook_loss: f64,
    pub commit_loss: f64,
}

/// Diagonal Gaussian over the design latent.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Tensor<f32>,
    pub logvar: Tensor<f32>,
}

impl GaussianPosterior {
    pub fn new(mu: Tensor<f32>, logvar: Tensor<f32>) -> Result<Self, NnError> {
        if mu.shape() != logvar.shape() {
            return Err(NnError::ShapeMismatch {
                op: "posterior",
                detail: format!("mean {:?} vs log-variance {:?}", mu.shape(), logvar.shape()),
            });
        }
        let (lo, hi) = LOGVAR_RANGE;
        let logvar = logvar.map(|v| v.clamp(lo as f32, hi as f32));
        Ok(Self { mu, logvar })
    }

    /// `μ + σ ⊙ ε` for a given `ε`.
    pub fn sample_with(&self, eps: &Tensor<f32>) -> Result<Tensor<f32>, NnError> {
        if eps.shape() != self.mu.shape() {
            return Err(NnError::ShapeMismatch {
                op: "posterior",
                detail: format!("noise {:?} vs mean {:?}", eps.shape(), self.mu.shape()),
            });
        }
        let data = self
            .mu
            .data()
            .iter()
            .zip(self.logvar.data())
            .zip(eps.data())
            .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
            .collect();
        Tensor::new(self.mu.shape(), data)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Tensor<f32> {
        let eps = Tensor::new(self.mu.shape(), (0..self.mu.len()).map(|_| rng.sample(StandardNormal)).collect())
            .expect("shape matches");
        self.sample_with(&eps).expect("shape matches")
    }

    /// Mean per-element divergence from the standard normal.
    pub fn kl(&self) -> f64 {
        crate::kl_divergence(&self.mu, &self.logvar)
    }
}

/// Condition encoder (quantized), design encoder (Gaussian) and decoder,
/// with all weights in one store.
#[derive(Debug, Clone)]
pub struct Vae {
    pub config: VaeConfig,
    pub store: ParamStore<f32>,
    pub codebook: ParamId,
    condition_encoder: Encoder,
    design_encoder: Encoder,
    decoder: Decoder,
}

impl Vae {
    pub fn new(config: VaeConfig, seed: u64) -> Result<Self, VaeError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let l = config.latent_channels;
        let condition_encoder = Encoder::new(&mut store, "condition", &config, l, &mut rng)?;
        let design_encoder = Encoder::new(&mut store, "design", &config, 2 * l, &mut rng)?;
        let decoder = Decoder::new(&mut store, &config, &mut rng)?;
        let k = config.codebook_size;
        let codebook = store.add("codebook", Tensor::uniform(&[k, l], 1.0 / k as f64, &mut rng))?;
        Ok(Self {
            config,
            store,
            codebook,
            condition_encoder,
            design_encoder,
            decoder,
        })
    }

    /// Builds the architecture of `config` and loads weights from `path`.
    pub fn load(config: VaeConfig, path: &Path) -> Result<Self, VaeError> {
        let mut vae = Self::new(config, 0)?;
        let loaded = nnkit::load_checkpoint::<f32>(path)?;
        vae.store.assign_from(&loaded)?;
        Ok(vae)
    }

    pub fn save(&self, path: &Path) -> Result<(), VaeError> {
        Ok(nnkit::save_checkpoint(&self.store, path)?)
    }

    fn check_grid(x: &[usize]) -> Result<(), NnError> {
        if x.len() != 5 || x[1] != 1 || x[2..].iter().any(|&d| d == 0 || d % LATENT_STRIDE != 0) {
            return Err(NnError::ShapeMismatch {
                op: "vae",
                detail: format!("expected [n, 1, d, h, w] with sides divisible by {LATENT_STRIDE}, got {x:?}"),
            });
        }
        Ok(())
    }

    pub fn encode_condition_nodes(&self, g: &mut Graph<f32>, x: Var) -> Result<ConditionNodes, NnError> {
        Self::check_grid(g.shape(x))?;
        let continuous = self.condition_encoder.forward(g, &self.store, x)?;
        let shape = g.shape(continuous).to_vec();
        let indices = nearest_codes(g.value(continuous), self.store.get(self.codebook))?;
        let table = g.param(&self.store, self.codebook);
        let quantized = g.gather_rows(table, &indices, &shape)?;
        let frozen_z = g.detach(continuous);
        let frozen_q = g.detach(quantized);
        // straight-through: forward value z_q, gradient of identity w.r.t. z_e
        let gap = g.sub(frozen_q, frozen_z)?;
        let latent = g.add(continuous, gap)?;
        let d = g.sub(frozen_z, quantized)?;
        let d = g.square(d);
        let codebook_loss = g.mean(d);
        let d = g.sub(continuous, frozen_q)?;
        let d = g.square(d);
        let commit_loss = g.mean(d);
        Ok(ConditionNodes {
            latent,
            continuous,
            indices,
            codebook_loss,
            commit_loss,
        })
    }

    /// Returns `(μ, clamped log σ²)`.
    pub fn encode_design_nodes(&self, g: &mut Graph<f32>, x: Var) -> Result<(Var, Var), NnError> {
        Self::check_grid(g.shape(x))?;
        let h = self.design_encoder.forward(g, &self.store, x)?;
        let l = self.config.latent_channels;
        let mu = g.slice_channels(h, 0, l)?;
        let logvar = g.slice_channels(h, l, l)?;
        let logvar = g.clamp(logvar, LOGVAR_RANGE.0, LOGVAR_RANGE.1);
        Ok((mu, logvar))
    }

    /// Returns decoder logits for concatenated latents.
    pub fn decode_nodes(&self, g: &mut Graph<f32>, cond: Var, design: Var) -> Result<Var, NnError> {
        let (cs, ds) = (g.shape(cond), g.shape(design));
        let l = self.config.latent_channels;
        if cs != ds || cs.len() != 5 || cs[1] != l {
            return Err(NnError::ShapeMismatch {
                op: "decode",
                detail: format!("condition latent {cs:?} vs design latent {ds:?}"),
            });
        }
        let z = g.concat(&[cond, design])?;
        self.decoder.forward(g, &self.store, z)
    }

    pub fn encode_condition(&self, field: &Tensor<f32>) -> Result<QuantizedCondition, NnError> {
        let mut g = Graph::new();
        let x = g.constant(field.clone());
        let nodes = self.encode_condition_nodes(&mut g, x)?;
        let latent = lookup(self.store.get(self.codebook), &nodes.indices, g.shape(nodes.continuous))?;
        Ok(QuantizedCondition {
            latent,
            indices: nodes.indices,
            codebook_loss: g.value(nodes.codebook_loss).data()[0] as f64,
            commit_loss: g.value(nodes.commit_loss).data()[0] as f64,
        })
    }

    pub fn encode_design(&self, density: &Tensor<f32>) -> Result<GaussianPosterior, NnError> {
        let mut g = Graph::new();
        let x = g.constant(density.clone());
        let (mu, logvar) = self.encode_design_nodes(&mut g, x)?;
        GaussianPosterior::new(g.value(mu).clone(), g.value(logvar).clone())
    }

    /// Density in (0, 1) on the grid the latents were encoded from.
    pub fn decode(&self, cond: &Tensor<f32>, design: &Tensor<f32>) -> Result<Tensor<f32>, NnError> {
        let mut g = Graph::new();
        let c = g.constant(cond.clone());
        let d = g.constant(design.clone());
        let logits = self.decode_nodes(&mut g, c, d)?;
        let out = g.sigmoid(logits);
        // saturated f32 sigmoids round to exactly 0 or 1; keep the open interval
        let below_one = f32::from_bits(1.0f32.to_bits() - 1);
        Ok(g.value(out).map(|v| v.clamp(f32::MIN_POSITIVE, below_one)))
    }
}
