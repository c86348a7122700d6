use voxfem::GridDims;

use crate::oc::RHO_MIN;

/// Density-weighted sensitivity filter with cone weights
/// `w = max(0, r - dist)` over element centres.
#[derive(Debug, Clone)]
pub struct SensitivityFilter {
    dims: GridDims,
    stencil: Vec<([isize; 3], f64)>,
}

impl SensitivityFilter {
    pub fn new(dims: GridDims, radius: f64) -> Self {
        let reach = radius.ceil() as isize;
        let mut stencil = Vec::new();
        // dk, dj, di order keeps neighbours in ascending flat-index order.
        for dk in -reach..=reach {
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    let dist = ((di * di + dj * dj + dk * dk) as f64).sqrt();
                    let w = radius - dist;
                    if w > 0.0 {
                        stencil.push(([di, dj, dk], w));
                    }
                }
            }
        }
        Self { dims, stencil }
    }

    pub fn apply(&self, sens: &[f64], density: &[f64]) -> Vec<f64> {
        let d = &self.dims;
        assert_eq!(sens.len(), d.n_elements());
        assert_eq!(density.len(), d.n_elements());
        let (nx, ny, nz) = (d.nx as isize, d.ny as isize, d.nz as isize);
        let mut out = vec![0.0; sens.len()];
        for e in 0..sens.len() {
            let [i, j, k] = d.element_coords(e).map(|c| c as isize);
            let mut num = 0.0;
            let mut den = 0.0;
            for &([di, dj, dk], w) in &self.stencil {
                let (a, b, c) = (i + di, j + dj, k + dk);
                if a < 0 || b < 0 || c < 0 || a >= nx || b >= ny || c >= nz {
                    continue;
                }
                let n = d.element_index(a as usize, b as usize, c as usize);
                num += w * density[n] * sens[n];
                den += w;
            }
            out[e] = num / (density[e].max(RHO_MIN) * den);
        }
        out
    }
}

/// One-shot form of [`SensitivityFilter::apply`].
pub fn sensitivity_filter(dims: GridDims, sens: &[f64], density: &[f64], radius: f64) -> Vec<f64> {
    SensitivityFilter::new(dims, radius).apply(sens, density)
}
