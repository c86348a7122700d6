use serde::{Deserialize, Serialize};

use crate::DiffError;

/// Linear variance schedule. Step `t` runs from 1 to `steps`; arrays are
/// stored at index `t - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

/// `β` linearly interpolated from `beta_start` at `t = 1` to `beta_end` at
/// `t = steps`, with `ᾱ` as the running product of `1 − β`.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule, DiffError> {
    if steps == 0 {
        return Err(DiffError::InvalidSchedule("at least one step is required".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffError::InvalidSchedule(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for a in &alpha {
        acc *= a;
        alpha_bar.push(acc);
    }
    Ok(NoiseSchedule { beta, alpha, alpha_bar })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// Start step of a partial-noise edit of the given strength.
    pub fn start_step(&self, strength: f64) -> usize {
        (strength.clamp(0.0, 1.0) * self.steps() as f64).round() as usize
    }
}

/// Serializable description of a schedule.
///
/// The β endpoints are quoted for a `reference_steps`-step chain. A chain
/// with fewer steps multiplies them by `reference_steps / steps`, which
/// keeps `Σβ` and therefore the final noise level roughly unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub reference_steps: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            beta_start: 1e-4,
            beta_end: 0.02,
            reference_steps: Some(1000),
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule, DiffError> {
        let factor = match self.reference_steps {
            Some(r) if self.steps > 0 => r as f64 / self.steps as f64,
            _ => 1.0,
        };
        make_schedule(self.steps, self.beta_start * factor, self.beta_end * factor)
    }
}
