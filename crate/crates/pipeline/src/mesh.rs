//! Boundary surface of the occupied voxels as an OBJ quad mesh.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use voxfem::DensityField;

use crate::PipelineError;

/// Quads with outward counter-clockwise winding over shared lattice
/// vertices. Coordinates are in element units with the grid origin at 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoxelMesh {
    pub vertices: Vec<[usize; 3]>,
    pub quads: Vec<[usize; 4]>,
}

impl VoxelMesh {
    /// One quad per occupied-voxel face whose neighbour is void or outside
    /// the grid.
    pub fn from_field(d: &DensityField, threshold: f64) -> Self {
        let dims = d.dims();
        let ext = [dims.nx, dims.ny, dims.nz];
        let values = d.values();
        let solid = |c: [isize; 3]| {
            (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < ext[a])
                && values[dims.element_index(c[0] as usize, c[1] as usize, c[2] as usize)] >= threshold
        };
        let mut mesh = VoxelMesh::default();
        let mut index: HashMap<[usize; 3], usize> = HashMap::new();
        let mut vertex = |p: [usize; 3], mesh: &mut VoxelMesh| {
            *index.entry(p).or_insert_with(|| {
                mesh.vertices.push(p);
                mesh.vertices.len() - 1
            })
        };
        for e in 0..dims.n_elements() {
            if values[e] < threshold {
                continue;
            }
            let c = dims.element_coords(e);
            for axis in 0..3 {
                // (u, v, axis) is a right-handed frame
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                for positive in [false, true] {
                    let mut n = c.map(|x| x as isize);
                    n[axis] += if positive { 1 } else { -1 };
                    if solid(n) {
                        continue;
                    }
                    let mut base = c;
                    if positive {
                        base[axis] += 1;
                    }
                    let mut bu = base;
                    bu[u] += 1;
                    let mut buv = bu;
                    buv[v] += 1;
                    let mut bv = base;
                    bv[v] += 1;
                    let corners = if positive { [base, bu, buv, bv] } else { [base, bv, buv, bu] };
                    let quad = corners.map(|p| vertex(p, &mut mesh));
                    mesh.quads.push(quad);
                }
            }
        }
        mesh
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(16 * (self.vertices.len() + self.quads.len()));
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
        }
        for q in &self.quads {
            let _ = writeln!(s, "f {} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1);
        }
        s
    }
}

/// Writes the thresholded design surface to `path` and returns the mesh.
pub fn export_mesh(d: &DensityField, threshold: f64, path: &Path) -> Result<VoxelMesh, PipelineError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(PipelineError::InvalidConfig(format!("threshold {threshold} outside (0, 1)")));
    }
    let mesh = VoxelMesh::from_field(d, threshold);
    if mesh.quads.is_empty() {
        return Err(PipelineError::EmptyDesign { threshold });
    }
    std::fs::write(path, mesh.to_obj()).map_err(|e| PipelineError::io(path, e))?;
    Ok(mesh)
}
