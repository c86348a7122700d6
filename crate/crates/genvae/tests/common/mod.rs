#![allow(dead_code)]

use genvae::{Vae, VaeConfig};
use simpgen::{Dataset, Sample};
use voxfem::GridDims;

pub fn tiny_config() -> VaeConfig {
    VaeConfig {
        base_channels: 4,
        groups: 2,
        blocks_per_level: 1,
        latent_channels: 4,
        codebook_size: 32,
    }
}

pub fn tiny_vae(seed: u64) -> Vae {
    Vae::new(tiny_config(), seed).unwrap()
}

/// Smooth synthetic pairs on an `n³` grid: a ball whose centre and radius
/// vary with the id, with a condition field decaying from the same centre.
pub fn synthetic_dataset(n: usize, count: usize) -> Dataset {
    let dims = GridDims::cube(n);
    let samples = (0..count as u64)
        .map(|id| {
            let t = id as f32 / count.max(1) as f32;
            let c = [n as f32 * (0.3 + 0.4 * t), n as f32 * 0.5, n as f32 * (0.7 - 0.4 * t)];
            let r = n as f32 * (0.2 + 0.15 * t);
            let mut condition = Vec::new();
            let mut density = Vec::new();
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let p = [i as f32 + 0.5, j as f32 + 0.5, k as f32 + 0.5];
                        let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
                        condition.push((-d / n as f32).exp());
                        density.push(if d < r { 1.0 } else { 0.001 });
                    }
                }
            }
            Sample {
                id,
                volfrac: 0.3,
                condition,
                density,
            }
        })
        .collect();
    Dataset { dims, samples }
}
