use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Graph, NnError, Tensor, Var};

/// Outcome of [`check_gradients`]: one relative error per input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub per_input: Vec<f64>,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.per_input.iter().cloned().fold(0.0, f64::max)
    }
}

/// Compares reverse-mode gradients of `f` against central differences.
///
/// The output of `f` is reduced to `L = Σ r ⊙ y` with fixed random weights
/// `r`, so every output entry is exercised. For each input the error is
/// `max |analytic - numeric| / max(max |numeric|, 1e-8)`.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], h: f64, seed: u64, f: F) -> Result<GradCheck, NnError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, NnError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let y = f(&mut g, &vars)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..g.value(y).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let seed_grad = Tensor::new(g.shape(y), weights.clone())?;
    g.backward_from(&[(y, seed_grad)])?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let objective = |values: &[Tensor<f64>]| -> Result<f64, NnError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.input(t.clone())).collect();
        let y = f(&mut g, &vars)?;
        Ok(g.value(y).data().iter().zip(&weights).map(|(a, b)| a * b).sum())
    };

    let mut per_input = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut max_diff: f64 = 0.0;
        let mut max_num: f64 = 0.0;
        for k in 0..input.len() {
            let orig = input.data()[k];
            work[i].data_mut()[k] = orig + h;
            let plus = objective(&work)?;
            work[i].data_mut()[k] = orig - h;
            let minus = objective(&work)?;
            work[i].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            max_diff = max_diff.max((analytic[i].data()[k] - numeric).abs());
            max_num = max_num.max(numeric.abs());
        }
        per_input.push(max_diff / max_num.max(1e-8));
    }
    Ok(GradCheck { per_input })
}
