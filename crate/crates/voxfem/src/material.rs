use serde::{Deserialize, Serialize};

use crate::FemError;

/// Isotropic material with SIMP stiffness interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticParams {
    pub youngs_solid: f64,
    pub youngs_void: f64,
    pub poisson: f64,
    pub penalty: f64,
}

impl Default for ElasticParams {
    fn default() -> Self {
        Self {
            youngs_solid: 1.0,
            youngs_void: 1e-9,
            poisson: 0.3,
            penalty: 3.0,
        }
    }
}

impl ElasticParams {
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.youngs_void > 0.0 && self.youngs_void < self.youngs_solid) {
            return Err(FemError::InvalidMaterial(format!(
                "need 0 < youngs_void ({}) < youngs_solid ({})",
                self.youngs_void, self.youngs_solid
            )));
        }
        if !(0.0..0.5).contains(&self.poisson) {
            return Err(FemError::InvalidMaterial(format!(
                "poisson ratio {} outside [0, 0.5)",
                self.poisson
            )));
        }
        if !(self.penalty >= 1.0) {
            return Err(FemError::InvalidMaterial(format!("penalty {} < 1", self.penalty)));
        }
        Ok(())
    }

    /// Interpolated modulus `E_void + ρ^p (E_solid - E_void)`.
    #[inline]
    pub fn youngs(&self, density: f64) -> f64 {
        self.youngs_void + density.powf(self.penalty) * (self.youngs_solid - self.youngs_void)
    }

    /// `dE/dρ = p ρ^(p-1) (E_solid - E_void)`.
    #[inline]
    pub fn youngs_derivative(&self, density: f64) -> f64 {
        self.penalty * density.powf(self.penalty - 1.0) * (self.youngs_solid - self.youngs_void)
    }
}
