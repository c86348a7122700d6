use serde::{Deserialize, Serialize};

use crate::{FemError, GridDims};

/// Raw element energies above this percentile are clipped before
/// normalization; load points otherwise produce isolated spikes.
pub const CLIP_PERCENTILE: f64 = 0.995;

/// Per-element material density in `[0, 1]`, x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    dims: GridDims,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(dims: GridDims, values: Vec<f64>) -> Result<Self, FemError> {
        if values.len() != dims.n_elements() {
            return Err(FemError::DimensionMismatch {
                expected: format!("{} elements ({dims})", dims.n_elements()),
                found: format!("{} values", values.len()),
            });
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(FemError::InvalidProblem(format!(
                "density {v} at element {i} outside [0, 1]"
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn uniform(dims: GridDims, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value), "density {value} outside [0, 1]");
        Self {
            dims,
            values: vec![value; dims.n_elements()],
        }
    }

    /// Elements at or above `threshold` become solid, the rest void.
    pub fn binarized(&self, threshold: f64) -> Self {
        Self {
            dims: self.dims,
            values: self
                .values
                .iter()
                .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Nodal displacements, three components per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementField {
    pub values: Vec<f64>,
}

impl DisplacementField {
    pub fn zeros(dims: &GridDims) -> Self {
        Self {
            values: vec![0.0; dims.n_dofs()],
        }
    }

    pub fn node(&self, n: usize) -> [f64; 3] {
        [self.values[3 * n], self.values[3 * n + 1], self.values[3 * n + 2]]
    }
}

/// Normalized per-element strain energy in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainEnergyField {
    dims: GridDims,
    values: Vec<f64>,
}

impl StrainEnergyField {
    /// Clips raw energies at the [`CLIP_PERCENTILE`] (nearest rank) and
    /// min-max scales to `[0, 1]`. An all-zero input stays all zero; a
    /// constant positive input maps to all ones.
    pub fn from_raw(dims: GridDims, raw: &[f64]) -> Self {
        assert_eq!(raw.len(), dims.n_elements());
        let mut sorted = raw.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let rank = ((CLIP_PERCENTILE * n as f64).ceil() as usize).clamp(1, n) - 1;
        let hi = sorted[rank];
        let lo = sorted[0];
        let values = if hi > lo {
            raw.iter().map(|&s| ((s.min(hi) - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
        } else if hi > 0.0 {
            vec![1.0; n]
        } else {
            vec![0.0; n]
        };
        Self { dims, values }
    }

    /// Wraps already-normalized values, checking the `[0, 1]` range.
    pub fn new(dims: GridDims, values: Vec<f64>) -> Result<Self, FemError> {
        if values.len() != dims.n_elements() {
            return Err(FemError::DimensionMismatch {
                expected: format!("{} elements ({dims})", dims.n_elements()),
                found: format!("{} values", values.len()),
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(FemError::InvalidProblem("strain energy outside [0, 1]".into()));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
