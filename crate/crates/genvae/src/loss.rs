use nnkit::{Graph, NnError, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::Vae;

/// Mean over elements of `½(μ² + σ² − 1 − log σ²)`.
pub fn kl_divergence(mu: &Tensor<f32>, logvar: &Tensor<f32>) -> f64 {
    let n = mu.len().max(1) as f64;
    let s: f64 = mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(&m, &lv)| {
            let (m, lv) = (m as f64, lv as f64);
            0.5 * (m * m + lv.exp() - 1.0 - lv)
        })
        .sum();
    s / n
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VaeLossReport {
    /// Mean absolute density error.
    pub recon: f64,
    pub kl: f64,
    pub vq_codebook: f64,
    /// Commitment term, already weighted.
    pub vq_commit: f64,
    pub total: f64,
}

impl VaeLossReport {
    pub(crate) fn accumulate(&mut self, other: &Self, weight: f64) {
        self.recon += weight * other.recon;
        self.kl += weight * other.kl;
        self.vq_codebook += weight * other.vq_codebook;
        self.vq_commit += weight * other.vq_commit;
        self.total += weight * other.total;
    }
}

/// Weights of the loss terms besides reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub kl: f64,
    pub commitment: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            kl: 1e-4,
            commitment: 0.25,
        }
    }
}

/// Graph nodes of one loss evaluation.
#[derive(Debug, Clone)]
pub struct LossNodes {
    pub total: Var,
    pub reconstruction: Var,
    pub indices: Vec<usize>,
    pub continuous_condition: Var,
}

/// Records the full loss for a batch `condition, density: [n, 1, d, h, w]`.
/// `noise` overrides the reparameterization noise (zero gives the mean).
pub fn vae_loss_nodes<R: Rng + ?Sized>(
    vae: &Vae,
    g: &mut Graph<f32>,
    condition: Var,
    density: Var,
    weights: LossWeights,
    noise: Option<&Tensor<f32>>,
    rng: &mut R,
) -> Result<(LossNodes, VaeLossReport), NnError> {
    let cond = vae.encode_condition_nodes(g, condition)?;
    let (mu, logvar) = vae.encode_design_nodes(g, density)?;
    let eps = match noise {
        Some(t) => t.clone(),
        None => {
            let shape = g.shape(mu).to_vec();
            let n = g.value(mu).len();
            Tensor::new(&shape, (0..n).map(|_| rng.sample(StandardNormal)).collect())?
        }
    };
    let eps = g.constant(eps);
    let half = g.scale(logvar, 0.5);
    let std = g.exp(half);
    let spread = g.mul(std, eps)?;
    let z = g.add(mu, spread)?;
    let logits = vae.decode_nodes(g, cond.latent, z)?;
    let reconstruction = g.sigmoid(logits);

    let err = g.sub(reconstruction, density)?;
    let err = g.abs(err);
    let recon = g.mean(err);

    // ½(μ² + e^{lv} − 1 − lv)
    let m2 = g.square(mu);
    let var = g.exp(logvar);
    let t = g.add(m2, var)?;
    let t = g.sub(t, logvar)?;
    let t = g.affine(t, 0.5, -0.5);
    let kl = g.mean(t);

    let kl_w = g.scale(kl, weights.kl);
    let commit = g.scale(cond.commit_loss, weights.commitment);
    let total = g.add(recon, kl_w)?;
    let total = g.add(total, cond.codebook_loss)?;
    let total = g.add(total, commit)?;

    let scalar = |g: &Graph<f32>, v: Var| g.value(v).data()[0] as f64;
    let report = VaeLossReport {
        recon: scalar(g, recon),
        kl: scalar(g, kl),
        vq_codebook: scalar(g, cond.codebook_loss),
        vq_commit: scalar(g, commit),
        total: scalar(g, total),
    };
    Ok((
        LossNodes {
            total,
            reconstruction,
            indices: cond.indices,
            continuous_condition: cond.continuous,
        },
        report,
    ))
}

/// Evaluates the loss without recording gradients.
pub fn vae_loss<R: Rng + ?Sized>(
    vae: &Vae,
    condition: &Tensor<f32>,
    density: &Tensor<f32>,
    weights: LossWeights,
    rng: &mut R,
) -> Result<VaeLossReport, NnError> {
    let mut g = Graph::new();
    let c = g.constant(condition.clone());
    let d = g.constant(density.clone());
    Ok(vae_loss_nodes(vae, &mut g, c, d, weights, None, rng)?.1)
}
