use serde::{Deserialize, Serialize};
use voxfem::{GridDims, LoadKind, Preconditioner};

use crate::SimpError;

/// Target volume fractions 10%, 15%, ..., 50%.
pub const DEFAULT_VOLFRACS: [f64; 9] = [0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimpConfig {
    pub volfrac: f64,
    pub max_iters: usize,
    pub move_limit: f64,
    /// Exponent η of the optimality-criteria fixed point.
    pub damping: f64,
    pub filter_radius: f64,
    /// Stop once the largest element density change falls below this.
    pub convergence_tol: f64,
    /// Relative residual for each FEM solve.
    pub cg_tol: f64,
    pub preconditioner: Preconditioner,
}

impl Default for SimpConfig {
    fn default() -> Self {
        Self {
            volfrac: 0.3,
            max_iters: 60,
            move_limit: 0.2,
            damping: 0.5,
            filter_radius: 1.5,
            convergence_tol: 0.01,
            cg_tol: 1e-6,
            preconditioner: Preconditioner::Multigrid,
        }
    }
}

impl SimpConfig {
    pub fn validate(&self) -> Result<(), SimpError> {
        let bad = |m: String| Err(SimpError::InvalidConfig(m));
        if !(self.volfrac > 0.0 && self.volfrac < 1.0) {
            return bad(format!("volfrac {} outside (0, 1)", self.volfrac));
        }
        if !(self.filter_radius >= 1.0) {
            return bad(format!("filter radius {} < 1", self.filter_radius));
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return bad(format!("move limit {} outside (0, 1]", self.move_limit));
        }
        if !(self.damping > 0.0) || !(self.cg_tol > 0.0) {
            return bad("damping and cg_tol must be positive".into());
        }
        Ok(())
    }
}

/// Closed magnitude interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

/// Magnitude ranges per load kind. Forces and moments are per node or per
/// couple; surface tractions and pressures are per unit face area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadRanges {
    pub nodal_force: Range,
    pub surface_force: Range,
    pub pressure: Range,
    pub moment: Range,
}

impl Default for LoadRanges {
    fn default() -> Self {
        Self {
            nodal_force: Range { lo: 0.5, hi: 2.0 },
            surface_force: Range { lo: 0.05, hi: 0.2 },
            pressure: Range { lo: 0.05, hi: 0.2 },
            moment: Range { lo: 0.5, hi: 2.0 },
        }
    }
}

impl LoadRanges {
    pub fn get(&self, kind: LoadKind) -> Range {
        match kind {
            LoadKind::NodalForce => self.nodal_force,
            LoadKind::SurfaceForce => self.surface_force,
            LoadKind::Pressure => self.pressure,
            LoadKind::Moment => self.moment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemSamplerConfig {
    pub dims: GridDims,
    pub ranges: LoadRanges,
    pub volfracs: Vec<f64>,
    pub seed: u64,
}

impl Default for ProblemSamplerConfig {
    fn default() -> Self {
        Self {
            dims: GridDims::cube(16),
            ranges: LoadRanges::default(),
            volfracs: DEFAULT_VOLFRACS.to_vec(),
            seed: 0,
        }
    }
}

impl ProblemSamplerConfig {
    pub fn validate(&self) -> Result<(), SimpError> {
        if self.dims.is_empty() {
            return Err(SimpError::InvalidConfig("empty grid".into()));
        }
        if self.volfracs.is_empty() || self.volfracs.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(SimpError::InvalidConfig(format!(
                "volume fractions {:?} must be a nonempty subset of (0, 1)",
                self.volfracs
            )));
        }
        for kind in LoadKind::ALL {
            let r = self.ranges.get(kind);
            if !(r.lo.is_finite() && r.hi.is_finite() && 0.0 <= r.lo && r.lo <= r.hi) {
                return Err(SimpError::InvalidConfig(format!("bad {kind:?} magnitude range {r:?}")));
            }
        }
        Ok(())
    }
}
