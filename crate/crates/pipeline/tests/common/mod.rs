#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simpgen::{sample_problem, ProblemSamplerConfig};
use voxfem::{FemProblem, GridDims};

/// Random valid load case on a small grid.
pub fn problem(dims: GridDims, seed: u64) -> FemProblem {
    let cfg = ProblemSamplerConfig {
        dims,
        seed,
        ..Default::default()
    };
    sample_problem(&mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap()
}

/// Density with a solid slab through the middle of the grid along x plus a
/// faint background.
pub fn slab(dims: GridDims, half_width: usize) -> Vec<f32> {
    let mut v = vec![0.05f32; dims.n_elements()];
    for e in 0..dims.n_elements() {
        let [_, j, k] = dims.element_coords(e);
        let (cj, ck) = (dims.ny / 2, dims.nz / 2);
        if j + half_width >= cj && j < cj + half_width && k + half_width >= ck && k < ck + half_width {
            v[e] = 0.95;
        }
    }
    v
}

/// Smallest configuration that exercises every stage of the CLI.
pub const TINY_RUN: &str = r#"{
  "resolution": 16,
  "samples": 10,
  "simp": { "max_iters": 4 },
  "vae": { "base_channels": 4, "groups": 2, "codebook_size": 16 },
  "vae_train": { "epochs": 1, "batch_size": 4 },
  "ldm": {
    "denoiser": { "channels": 8, "groups": 2, "blocks": 1 },
    "schedule": { "steps": 10, "reference_steps": 100 }
  },
  "ldm_train": { "epochs": 1, "batch_size": 4 },
  "eval_conditions": 2,
  "designs_per_condition": 2,
  "eval_solver": { "max_iters": 300 }
}"#;

/// `count` smooth records on an `n³` grid: a bar whose thickness and
/// condition peak move with the id.
pub fn synthetic(n: usize, count: usize) -> simpgen::Dataset {
    let dims = GridDims::cube(n);
    let samples = (0..count as u64)
        .map(|id| {
            let shift = id as f32 / count.max(1) as f32;
            let half = 1 + (id as usize % 2) * n / 8;
            let density = slab(dims, half);
            let condition = (0..dims.n_elements())
                .map(|e| {
                    let [i, _, _] = dims.element_coords(e);
                    (-(i as f32 / n as f32 - shift).powi(2) * 4.0).exp()
                })
                .collect();
            simpgen::Sample {
                id,
                volfrac: 0.3,
                condition,
                density,
            }
        })
        .collect();
    simpgen::Dataset { dims, samples }
}
