//! Nearest-neighbour vector quantization against a codebook.

use nnkit::{NnError, Scalar, Tensor};

fn check(z: &Tensor<impl Scalar>, codebook: &Tensor<impl Scalar>) -> Result<(usize, usize, usize), NnError> {
    let (zs, cs) = (z.shape(), codebook.shape());
    if zs.len() < 2 || cs.len() != 2 || zs[1] != cs[1] || cs[0] == 0 {
        return Err(NnError::ShapeMismatch {
            op: "quantize",
            detail: format!("latent {zs:?} against codebook {cs:?}"),
        });
    }
    Ok((zs[0], zs[1], zs[2..].iter().product()))
}

/// Index of the nearest codebook row (Euclidean, ties to the lower index)
/// for every latent voxel of `z: [n, d, spatial...]`, sample-major.
pub fn nearest_codes<T: Scalar>(z: &Tensor<T>, codebook: &Tensor<T>) -> Result<Vec<usize>, NnError> {
    let (n, d, spatial) = check(z, codebook)?;
    let k = codebook.shape()[0];
    let cb: Vec<f64> = codebook.data().iter().map(|v| v.as_f64()).collect();
    let zd = z.data();
    let mut out = Vec::with_capacity(n * spatial);
    let mut v = vec![0.0; d];
    for i in 0..n {
        for s in 0..spatial {
            for (c, slot) in v.iter_mut().enumerate() {
                *slot = zd[(i * d + c) * spatial + s].as_f64();
            }
            let mut best = (f64::INFINITY, 0);
            for (row, code) in cb.chunks_exact(d).enumerate().take(k) {
                let dist: f64 = code.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best.0 {
                    best = (dist, row);
                }
            }
            out.push(best.1);
        }
    }
    Ok(out)
}

/// Replaces every latent vector by its nearest code.
pub fn quantize<T: Scalar>(z: &Tensor<T>, codebook: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>), NnError> {
    let indices = nearest_codes(z, codebook)?;
    Ok((lookup(codebook, &indices, z.shape())?, indices))
}

/// Builds a latent of `shape` from codebook rows.
pub fn lookup<T: Scalar>(codebook: &Tensor<T>, indices: &[usize], shape: &[usize]) -> Result<Tensor<T>, NnError> {
    let probe = Tensor::<T>::zeros(&[shape[0], shape[1]]);
    let _ = check(&probe, codebook)?;
    let (n, d, spatial) = (shape[0], shape[1], shape[2..].iter().product::<usize>());
    let k = codebook.shape()[0];
    if indices.len() != n * spatial || indices.iter().any(|&i| i >= k) {
        return Err(NnError::ShapeMismatch {
            op: "quantize",
            detail: format!("{} indices for latent {shape:?}", indices.len()),
        });
    }
    let cb = codebook.data();
    let mut data = vec![T::zero(); n * d * spatial];
    for i in 0..n {
        for s in 0..spatial {
            let row = indices[i * spatial + s];
            for c in 0..d {
                data[(i * d + c) * spatial + s] = cb[row * d + c];
            }
        }
    }
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_resolve_to_lower_index() {
        let cb = Tensor::<f64>::from_f64(&[2, 1], &[-1.0, 1.0]).unwrap();
        let z = Tensor::<f64>::from_f64(&[1, 1, 3], &[0.0, 0.9, -5.0]).unwrap();
        assert_eq!(nearest_codes(&z, &cb).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let cb = Tensor::<f32>::zeros(&[4, 3]);
        let z = Tensor::<f32>::zeros(&[1, 4, 2, 2, 2]);
        assert!(quantize(&z, &cb).is_err());
    }
}
