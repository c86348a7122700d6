use crate::{Scalar, Tensor};

/// Sinusoidal timestep features `[sin(t ω_i), cos(t ω_i)]` with
/// `ω_i = 10000^(-i / (dim/2))`; shape `[timesteps.len(), dim]`.
pub fn timestep_embedding<T: Scalar>(timesteps: &[f64], dim: usize) -> Tensor<T> {
    assert!(dim >= 2 && dim % 2 == 0, "embedding width must be even");
    let half = dim / 2;
    let mut data = Vec::with_capacity(timesteps.len() * dim);
    for &t in timesteps {
        let freqs = (0..half).map(|i| (-(10000f64.ln()) * i as f64 / half as f64).exp());
        let (sin, cos): (Vec<f64>, Vec<f64>) = freqs.map(|w| ((t * w).sin(), (t * w).cos())).unzip();
        data.extend(sin.into_iter().chain(cos).map(T::from_f64));
    }
    Tensor::new(&[timesteps.len(), dim], data).expect("consistent shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_timestep_is_sin_zero_cos_one() {
        let e: Tensor<f64> = timestep_embedding(&[0.0], 8);
        assert_eq!(e.data(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn first_frequency_is_one() {
        let e: Tensor<f64> = timestep_embedding(&[3.0, 5.0], 6);
        assert_eq!(e.shape(), &[2, 6]);
        assert!((e.data()[0] - 3f64.sin()).abs() < 1e-15);
        assert!((e.data()[6 + 3] - 5f64.cos()).abs() < 1e-15);
        // distinct steps give distinct features
        assert_ne!(e.data()[..6], e.data()[6..]);
    }
}
