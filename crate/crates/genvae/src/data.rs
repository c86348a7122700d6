//! Conversions between dataset records, voxel fields and network tensors.
//! Voxel order is x fastest, so a grid maps to spatial shape `[nz, ny, nx]`.

use nnkit::{NnError, Tensor};
use simpgen::{Dataset, Sample};
use voxfem::{DensityField, GridDims};

pub fn grid_shape(dims: &GridDims) -> [usize; 3] {
    [dims.nz, dims.ny, dims.nx]
}

/// One field as a `[1, 1, nz, ny, nx]` tensor.
pub fn field_tensor(dims: &GridDims, values: &[f32]) -> Result<Tensor<f32>, NnError> {
    let [a, b, c] = grid_shape(dims);
    Tensor::new(&[1, 1, a, b, c], values.to_vec())
}

/// Condition and density batches `[n, 1, nz, ny, nx]` for the given samples.
pub fn sample_batch(dims: &GridDims, samples: &[&Sample]) -> Result<(Tensor<f32>, Tensor<f32>), NnError> {
    let [a, b, c] = grid_shape(dims);
    let shape = [samples.len(), 1, a, b, c];
    let cond = samples.iter().flat_map(|s| s.condition.iter().copied()).collect();
    let dens = samples.iter().flat_map(|s| s.density.iter().copied()).collect();
    Ok((Tensor::new(&shape, cond)?, Tensor::new(&shape, dens)?))
}

/// Samples of `dataset` with the given ids, in the given order.
pub fn select<'a>(dataset: &'a Dataset, ids: &[u64]) -> Vec<&'a Sample> {
    ids.iter()
        .map(|&id| dataset.get(id).unwrap_or_else(|| panic!("sample {id} not in dataset")))
        .collect()
}

/// Splits a `[n, 1, ...]` decoder output into density fields.
pub fn density_fields(dims: &GridDims, batch: &Tensor<f32>) -> Result<Vec<DensityField>, voxfem::FemError> {
    let per = dims.n_elements();
    batch
        .data()
        .chunks(per)
        .map(|c| DensityField::new(*dims, c.iter().map(|&v| v as f64).collect()))
        .collect()
}
