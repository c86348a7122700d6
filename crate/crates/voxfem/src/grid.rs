use serde::{Deserialize, Serialize};

/// Element counts along x, y and z. Nodes sit on the integer lattice
/// `[0, nx] × [0, ny] × [0, nz]`; all flat indices are x-fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

/// Corner offsets of a unit hexahedron in the usual counter-clockwise order:
/// bottom face (z = 0) first, then the top face.
pub(crate) const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

impl GridDims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn node_dims(&self) -> [usize; 3] {
        [self.nx + 1, self.ny + 1, self.nz + 1]
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1) * (self.nz + 1)
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.n_nodes()
    }

    pub fn is_empty(&self) -> bool {
        self.n_elements() == 0
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.nx + 1) * (j + (self.ny + 1) * k)
    }

    pub fn node_coords(&self, node: usize) -> [usize; 3] {
        let sx = self.nx + 1;
        let sy = self.ny + 1;
        [node % sx, (node / sx) % sy, node / (sx * sy)]
    }

    pub fn element_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    pub fn element_coords(&self, e: usize) -> [usize; 3] {
        [e % self.nx, (e / self.nx) % self.ny, e / (self.nx * self.ny)]
    }

    /// Global node indices of element `(i, j, k)` in [`CORNERS`] order.
    pub fn element_nodes(&self, i: usize, j: usize, k: usize) -> [usize; 8] {
        let base = self.node_index(i, j, k);
        let sx = self.nx + 1;
        let sxy = sx * (self.ny + 1);
        [
            base,
            base + 1,
            base + 1 + sx,
            base + sx,
            base + sxy,
            base + 1 + sxy,
            base + 1 + sx + sxy,
            base + sx + sxy,
        ]
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let [i, j, k] = self.node_coords(node);
        i == 0 || j == 0 || k == 0 || i == self.nx || j == self.ny || k == self.nz
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&n| self.is_boundary_node(n)).collect()
    }
}

impl std::fmt::Display for GridDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_round_trip() {
        let d = GridDims::new(3, 2, 4);
        for n in 0..d.n_nodes() {
            let [i, j, k] = d.node_coords(n);
            assert_eq!(d.node_index(i, j, k), n);
        }
        for e in 0..d.n_elements() {
            let [i, j, k] = d.element_coords(e);
            assert_eq!(d.element_index(i, j, k), e);
        }
    }

    #[test]
    fn element_nodes_follow_corner_order() {
        let d = GridDims::new(3, 2, 4);
        let nodes = d.element_nodes(1, 1, 2);
        for (c, &n) in CORNERS.iter().zip(nodes.iter()) {
            assert_eq!(d.node_coords(n), [1 + c[0], 1 + c[1], 2 + c[2]]);
        }
    }

    #[test]
    fn boundary_count() {
        let d = GridDims::cube(4);
        assert_eq!(d.boundary_nodes().len(), 125 - 27);
    }
}
