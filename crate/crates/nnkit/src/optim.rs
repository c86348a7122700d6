use serde::{Deserialize, Serialize};

use crate::params::Moments;
use crate::{Gradients, NnError, ParamStore, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: Some(1.0),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.lr > 0.0) {
            return Err(NnError::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(NnError::InvalidConfig(format!("{name} = {b} outside [0, 1)")));
            }
        }
        if !(self.eps > 0.0) || self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(NnError::InvalidConfig("eps and grad_clip must be positive".into()));
        }
        Ok(())
    }
}

/// One bias-corrected adaptive-moment step. Gradients are checked for
/// finiteness and globally norm-clipped before any parameter changes.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, grads: &Gradients<T>, cfg: &OptimizerConfig) -> Result<(), NnError> {
    cfg.validate()?;
    for id in store.ids() {
        if let Some(g) = grads.get(id) {
            if g.shape() != store.get(id).shape() {
                return Err(NnError::ShapeMismatch {
                    op: "adam_step",
                    detail: format!(
                        "gradient {:?} for parameter `{}` of shape {:?}",
                        g.shape(),
                        store.name(id),
                        store.get(id).shape()
                    ),
                });
            }
            if !g.all_finite() {
                return Err(NnError::NonFiniteGradient {
                    param: store.name(id).to_string(),
                });
            }
        }
    }
    let norm = grads.global_norm();
    let clip = match cfg.grad_clip {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };

    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
    let step_size = T::from_f64(cfg.lr / bc1);
    let inv_bc2 = T::from_f64(1.0 / bc2);
    let eps = T::from_f64(cfg.eps);
    let clip = T::from_f64(clip);
    for id in store.ids().collect::<Vec<_>>() {
        let Some(g) = grads.get(id) else { continue };
        let shape = g.shape().to_vec();
        let mut moments = store.moments[id.index()].take().unwrap_or_else(|| Moments {
            first: Tensor::zeros(&shape),
            second: Tensor::zeros(&shape),
        });
        let m = moments.first.data_mut();
        let v = moments.second.data_mut();
        let p = store.get_mut(id).data_mut();
        for k in 0..g.len() {
            let gk = g.data()[k] * clip;
            m[k] = b1 * m[k] + one_b1 * gk;
            v[k] = b2 * v[k] + one_b2 * gk * gk;
            p[k] = p[k] - step_size * m[k] / ((v[k] * inv_bc2).sqrt() + eps);
        }
        store.moments[id.index()] = Some(moments);
    }
    Ok(())
}
