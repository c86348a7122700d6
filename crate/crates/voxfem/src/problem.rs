use serde::{Deserialize, Serialize};

use crate::{ElasticParams, FemError, GridDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoadKind {
    NodalForce,
    SurfaceForce,
    Pressure,
    Moment,
}

impl LoadKind {
    pub const ALL: [LoadKind; 4] = [
        LoadKind::NodalForce,
        LoadKind::SurfaceForce,
        LoadKind::Pressure,
        LoadKind::Moment,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

    /// Axis normal to the face.
    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    /// The two in-plane axes `(u, v)`, in increasing order.
    pub fn tangent_axes(self) -> [usize; 2] {
        match self.axis() {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    pub fn outward_normal(self) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[self.axis()] = match self {
            Face::XMin | Face::YMin | Face::ZMin => -1.0,
            _ => 1.0,
        };
        n
    }

    fn is_max(self) -> bool {
        matches!(self, Face::XMax | Face::YMax | Face::ZMax)
    }
}

/// Rectangle of element faces on one side of the grid. `lo..hi` are element
/// ranges along the face's tangent axes, so the patch touches nodes
/// `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FacePatch {
    pub face: Face,
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl FacePatch {
    fn plane_coord(&self, dims: &GridDims) -> usize {
        if self.face.is_max() {
            [dims.nx, dims.ny, dims.nz][self.face.axis()]
        } else {
            0
        }
    }

    fn validate(&self, dims: &GridDims) -> Result<(), FemError> {
        let extent = [dims.nx, dims.ny, dims.nz];
        let [u, v] = self.face.tangent_axes();
        if self.lo[0] >= self.hi[0]
            || self.lo[1] >= self.hi[1]
            || self.hi[0] > extent[u]
            || self.hi[1] > extent[v]
        {
            return Err(FemError::InvalidProblem(format!(
                "face patch {self:?} outside the {dims} grid"
            )));
        }
        Ok(())
    }

    /// Node indices covered by the patch.
    pub fn nodes(&self, dims: &GridDims) -> Vec<usize> {
        let [u, v] = self.face.tangent_axes();
        let w = self.face.axis();
        let plane = self.plane_coord(dims);
        let mut out = Vec::new();
        for b in self.lo[1]..=self.hi[1] {
            for a in self.lo[0]..=self.hi[0] {
                let mut c = [0; 3];
                c[u] = a;
                c[v] = b;
                c[w] = plane;
                out.push(dims.node_index(c[0], c[1], c[2]));
            }
        }
        out
    }

    /// Corner nodes of every unit element face in the patch.
    pub fn element_faces(&self, dims: &GridDims) -> Vec<[usize; 4]> {
        let [u, v] = self.face.tangent_axes();
        let w = self.face.axis();
        let plane = self.plane_coord(dims);
        let node = |a: usize, b: usize| {
            let mut c = [0; 3];
            c[u] = a;
            c[v] = b;
            c[w] = plane;
            dims.node_index(c[0], c[1], c[2])
        };
        let mut out = Vec::new();
        for b in self.lo[1]..self.hi[1] {
            for a in self.lo[0]..self.hi[0] {
                out.push([node(a, b), node(a + 1, b), node(a + 1, b + 1), node(a, b + 1)]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LoadRegion {
    Node(usize),
    Patch(FacePatch),
}

/// One applied load.
///
/// * `NodalForce`: `magnitude · direction` at a single node.
/// * `SurfaceForce`: traction `magnitude · direction` per unit area on a patch.
/// * `Pressure`: `magnitude` per unit area acting against the outward normal.
/// * `Moment`: moment vector `magnitude · direction` applied as a
///   self-equilibrated force couple over the patch nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub kind: LoadKind,
    pub region: LoadRegion,
    pub magnitude: f64,
    pub direction: [f64; 3],
}

impl LoadSpec {
    pub fn nodal(node: usize, magnitude: f64, direction: [f64; 3]) -> Self {
        Self {
            kind: LoadKind::NodalForce,
            region: LoadRegion::Node(node),
            magnitude,
            direction,
        }
    }

    fn validate(&self, dims: &GridDims) -> Result<(), FemError> {
        if !self.magnitude.is_finite() || self.magnitude < 0.0 {
            return Err(FemError::InvalidProblem(format!(
                "load magnitude {} must be finite and non-negative",
                self.magnitude
            )));
        }
        if self.kind != LoadKind::Pressure {
            let norm = self.direction.iter().map(|d| d * d).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(FemError::InvalidProblem(format!(
                    "load direction {:?} is not a unit vector",
                    self.direction
                )));
            }
        }
        match (self.kind, &self.region) {
            (LoadKind::NodalForce, LoadRegion::Node(n)) => {
                if *n >= dims.n_nodes() {
                    return Err(FemError::InvalidProblem(format!(
                        "load node {n} outside the {dims} grid"
                    )));
                }
                Ok(())
            }
            (LoadKind::NodalForce, LoadRegion::Patch(_)) => Err(FemError::InvalidProblem(
                "nodal force needs a node region".into(),
            )),
            (_, LoadRegion::Patch(p)) => p.validate(dims),
            (kind, LoadRegion::Node(_)) => Err(FemError::InvalidProblem(format!(
                "{kind:?} load needs a face patch"
            ))),
        }
    }

    /// Adds this load's consistent nodal forces into `f` (3 entries per node).
    pub fn accumulate(&self, dims: &GridDims, f: &mut [f64]) {
        let add = |f: &mut [f64], node: usize, v: [f64; 3]| {
            for a in 0..3 {
                f[3 * node + a] += v[a];
            }
        };
        match (self.kind, &self.region) {
            (LoadKind::NodalForce, LoadRegion::Node(n)) => {
                add(f, *n, self.direction.map(|d| d * self.magnitude));
            }
            (LoadKind::SurfaceForce, LoadRegion::Patch(p)) => {
                let per_node = self.direction.map(|d| 0.25 * d * self.magnitude);
                for quad in p.element_faces(dims) {
                    for n in quad {
                        add(f, n, per_node);
                    }
                }
            }
            (LoadKind::Pressure, LoadRegion::Patch(p)) => {
                let per_node = p.face.outward_normal().map(|d| -0.25 * d * self.magnitude);
                for quad in p.element_faces(dims) {
                    for n in quad {
                        add(f, n, per_node);
                    }
                }
            }
            (LoadKind::Moment, LoadRegion::Patch(p)) => {
                let moment = self.direction.map(|d| d * self.magnitude);
                for (n, force) in couple_forces(dims, &p.nodes(dims), moment) {
                    add(f, n, force);
                }
            }
            _ => {}
        }
    }
}

/// Forces `f_i = ω × r_i` about the centroid with `ω = A⁻¹ M`, where
/// `A = Σ (|r|² I - r rᵀ)`. They sum to zero and their moment is exactly `M`.
fn couple_forces(dims: &GridDims, nodes: &[usize], moment: [f64; 3]) -> Vec<(usize, [f64; 3])> {
    let pos: Vec<[f64; 3]> = nodes
        .iter()
        .map(|&n| dims.node_coords(n).map(|c| c as f64))
        .collect();
    let count = pos.len() as f64;
    let mut c = [0.0; 3];
    for p in &pos {
        for a in 0..3 {
            c[a] += p[a] / count;
        }
    }
    let rel: Vec<[f64; 3]> = pos.iter().map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]).collect();
    let mut a = [[0.0; 3]; 3];
    for r in &rel {
        let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += if i == j { r2 } else { 0.0 } - r[i] * r[j];
            }
        }
    }
    let omega = solve3(a, moment);
    nodes
        .iter()
        .zip(rel.iter())
        .map(|(&n, r)| {
            (
                n,
                [
                    omega[1] * r[2] - omega[2] * r[1],
                    omega[2] * r[0] - omega[0] * r[2],
                    omega[0] * r[1] - omega[1] * r[0],
                ],
            )
        })
        .collect()
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let mut x = [0.0; 3];
    for col in 0..3 {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        x[col] = det(&m) / d;
    }
    x
}

/// One design task: a grid, its supports and its loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FemProblem {
    pub dims: GridDims,
    /// Nodes with all three displacement components held at zero.
    pub fixed_nodes: Vec<usize>,
    pub loads: Vec<LoadSpec>,
    #[serde(default)]
    pub material: ElasticParams,
}

impl FemProblem {
    pub fn new(dims: GridDims, fixed_nodes: Vec<usize>, loads: Vec<LoadSpec>) -> Self {
        Self {
            dims,
            fixed_nodes,
            loads,
            material: ElasticParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if self.dims.is_empty() {
            return Err(FemError::InvalidProblem("empty grid".into()));
        }
        self.material.validate()?;
        if let Some(&n) = self.fixed_nodes.iter().find(|&&n| n >= self.dims.n_nodes()) {
            return Err(FemError::InvalidProblem(format!(
                "fixed node {n} outside the {} grid",
                self.dims
            )));
        }
        if !supports_are_stable(&self.dims, &self.fixed_nodes) {
            return Err(FemError::SingularSystem(
                "need at least three non-collinear fixed nodes".into(),
            ));
        }
        for load in &self.loads {
            load.validate(&self.dims)?;
        }
        Ok(())
    }

    /// Assembled global load vector.
    pub fn load_vector(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.dims.n_dofs()];
        for load in &self.loads {
            load.accumulate(&self.dims, &mut f);
        }
        for &n in &self.fixed_nodes {
            f[3 * n..3 * n + 3].fill(0.0);
        }
        f
    }

    /// Per-DOF flag, `true` where the displacement is held at zero.
    pub fn fixed_dof_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.dims.n_dofs()];
        for &n in &self.fixed_nodes {
            mask[3 * n..3 * n + 3].fill(true);
        }
        mask
    }
}

/// At least three distinct fixed nodes whose positions span a plane.
/// Node coordinates are integers, so the cross-product test is exact.
pub(crate) fn supports_are_stable(dims: &GridDims, nodes: &[usize]) -> bool {
    let mut unique = nodes.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() < 3 {
        return false;
    }
    let pts: Vec<[i64; 3]> = unique
        .iter()
        .map(|&n| dims.node_coords(n).map(|c| c as i64))
        .collect();
    let p0 = pts[0];
    let d: Vec<[i64; 3]> = pts[1..]
        .iter()
        .map(|p| [p[0] - p0[0], p[1] - p0[1], p[2] - p0[2]])
        .collect();
    for i in 0..d.len() {
        for j in (i + 1)..d.len() {
            let (a, b) = (d[i], d[j]);
            let cross = [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ];
            if cross != [0, 0, 0] {
                return true;
            }
        }
    }
    false
}
