//! Sampling designs for held-out conditions and editing existing designs.
//!
//! Outputs reuse the dataset container: each record keeps the condition
//! field and target volume fraction of its source sample, and its id packs
//! the source id with a per-condition design index.

use genvae::data::{sample_batch, select};
use genvae::Vae;
use latdiff::{repeat_batch, LatentDiffusion};
use nnkit::Tensor;
use rayon::prelude::*;
use simpgen::{sample_seed, Dataset, DatasetManifest, Sample, Split};

use crate::PipelineError;

const DESIGN_BITS: u32 = 16;
const DECODE_CHUNK: usize = 8;

/// Record id of design `k` generated for condition `condition`.
pub fn design_id(condition: u64, k: u64) -> u64 {
    (condition << DESIGN_BITS) | k
}

/// Inverse of [`design_id`].
pub fn split_design_id(id: u64) -> (u64, u64) {
    (id >> DESIGN_BITS, id & ((1 << DESIGN_BITS) - 1))
}

/// The first `count` held-out sample ids in ascending order.
pub fn evaluation_conditions(manifest: &DatasetManifest, count: usize) -> Vec<u64> {
    let mut ids = manifest.ids(Split::Test);
    ids.sort_unstable();
    if ids.len() < count {
        log::warn!("only {} held-out samples for {count} evaluation conditions", ids.len());
    }
    ids.truncate(count);
    ids
}

/// Decodes design latents `[n, c, ...]` against one condition latent
/// `[1, c, ...]` into densities `[n, 1, ...]`.
pub fn decode_latents(vae: &Vae, cond: &Tensor<f32>, latents: &Tensor<f32>) -> Result<Tensor<f32>, PipelineError> {
    let n = latents.shape()[0];
    let per = latents.len() / n.max(1);
    let mut parts = Vec::new();
    for start in (0..n).step_by(DECODE_CHUNK) {
        let m = DECODE_CHUNK.min(n - start);
        let mut shape = latents.shape().to_vec();
        shape[0] = m;
        let chunk = Tensor::new(&shape, latents.data()[start * per..(start + m) * per].to_vec())?;
        parts.push(vae.decode(&repeat_batch(cond, m)?, &chunk)?);
    }
    let spatial: Vec<usize> = parts[0].shape()[1..].to_vec();
    let data: Vec<f32> = parts.into_iter().flat_map(|t| t.into_data()).collect();
    let mut shape = vec![n];
    shape.extend(spatial);
    Ok(Tensor::new(&shape, data)?)
}

fn records(source: &Sample, first: u64, densities: &Tensor<f32>) -> Vec<Sample> {
    let per = source.density.len();
    densities
        .data()
        .chunks(per)
        .enumerate()
        .map(|(k, d)| Sample {
            id: design_id(source.id, first + k as u64),
            volfrac: source.volfrac,
            condition: source.condition.clone(),
            density: d.to_vec(),
        })
        .collect()
}

/// `n` sampled designs for each condition, condition `c` drawing its noise
/// from `sample_seed(seed, c)`.
pub fn generate_designs(
    vae: &Vae,
    ldm: &LatentDiffusion,
    dataset: &Dataset,
    conditions: &[u64],
    n: usize,
    seed: u64,
) -> Result<Dataset, PipelineError> {
    let per_condition: Vec<Vec<Sample>> = conditions
        .par_iter()
        .map(|&id| -> Result<_, PipelineError> {
            let src = source(dataset, id)?;
            let (cond, _) = sample_batch(&dataset.dims, &[src])?;
            let q = vae.encode_condition(&cond)?;
            let gen = ldm.generate(&q.latent, n, sample_seed(seed, id), false)?;
            Ok(records(src, 0, &decode_latents(vae, &q.latent, &gen.latents)?))
        })
        .collect::<Result<_, _>>()?;
    Ok(Dataset {
        dims: dataset.dims,
        samples: per_condition.into_iter().flatten().collect(),
    })
}

/// `n` edits of each condition's own design at the given strength. The
/// design is encoded to its posterior mean, partially noised and denoised.
pub fn translate_designs(
    vae: &Vae,
    ldm: &LatentDiffusion,
    dataset: &Dataset,
    conditions: &[u64],
    strength: f64,
    n: usize,
    seed: u64,
) -> Result<Dataset, PipelineError> {
    let per_condition: Vec<Vec<Sample>> = conditions
        .par_iter()
        .map(|&id| -> Result<_, PipelineError> {
            let src = source(dataset, id)?;
            let (cond, dens) = sample_batch(&dataset.dims, &[src])?;
            let q = vae.encode_condition(&cond)?;
            let mean = vae.encode_design(&dens)?.mu;
            let edited = ldm.translate(&repeat_batch(&mean, n)?, &repeat_batch(&q.latent, n)?, strength, sample_seed(seed, id))?;
            Ok(records(src, 0, &decode_latents(vae, &q.latent, &edited)?))
        })
        .collect::<Result<_, _>>()?;
    Ok(Dataset {
        dims: dataset.dims,
        samples: per_condition.into_iter().flatten().collect(),
    })
}

fn source(dataset: &Dataset, id: u64) -> Result<&Sample, PipelineError> {
    dataset
        .get(id)
        .ok_or_else(|| PipelineError::InvalidConfig(format!("condition {id} is not in the dataset")))
}

/// Densities of the given records as one `[n, 1, ...]` tensor.
pub fn density_batch(dataset: &Dataset, ids: &[u64]) -> Result<Tensor<f32>, PipelineError> {
    Ok(sample_batch(&dataset.dims, &select(dataset, ids))?.1)
}
