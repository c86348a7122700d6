#![allow(dead_code)]

use latdiff::NoiseSchedule;
use nnkit::{NnError, Tensor};

/// Two-component 1D Gaussian mixture used as a toy data distribution.
pub struct Mixture {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub std: f64,
}

impl Mixture {
    /// Exact noise prediction `−√(1−ᾱ_t)·∇log p_t(x)` for the noised
    /// mixture, whose components are `N(√ᾱ_t·m_k, ᾱ_t·s² + 1 − ᾱ_t)`.
    pub fn exact_noise(&self, schedule: &NoiseSchedule, x: f64, t: usize) -> f64 {
        let ab = schedule.alpha_bar(t);
        let var = ab * self.std * self.std + 1.0 - ab;
        let mut num = 0.0;
        let mut den = 0.0;
        let logs: Vec<f64> = (0..2)
            .map(|k| self.weights[k].ln() - 0.5 * (x - ab.sqrt() * self.means[k]).powi(2) / var)
            .collect();
        let top = logs[0].max(logs[1]);
        for k in 0..2 {
            let r = (logs[k] - top).exp();
            num += r * (x - ab.sqrt() * self.means[k]) / var;
            den += r;
        }
        let score = -num / den;
        -(1.0 - ab).sqrt() * score
    }

    /// Predictor over `[n, 2, 1, 1, 1]` inputs (condition channel ignored).
    pub fn predictor<'a>(&'a self, schedule: &'a NoiseSchedule) -> impl Fn(&Tensor<f32>, &[usize]) -> Result<Tensor<f32>, NnError> + 'a {
        move |input: &Tensor<f32>, t: &[usize]| {
            let n = input.shape()[0];
            let out = (0..n)
                .map(|i| self.exact_noise(schedule, input.data()[2 * i + 1] as f64, t[i]) as f32)
                .collect();
            Tensor::new(&[n, 1, 1, 1, 1], out)
        }
    }
}

pub fn zero_predictor(input: &Tensor<f32>, _t: &[usize]) -> Result<Tensor<f32>, NnError> {
    let mut shape = input.shape().to_vec();
    shape[1] /= 2;
    Ok(Tensor::zeros(&shape))
}

/// Asymptotic Kolmogorov distribution tail `P(K > λ)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov p-value against a continuous CDF.
pub fn ks_p_value(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d)
}
