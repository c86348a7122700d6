use pipeline::{export_mesh, PipelineError, VoxelMesh};
use proptest::prelude::*;
use voxfem::{DensityField, GridDims};

fn field(dims: GridDims, solid: &[bool]) -> DensityField {
    DensityField::new(dims, solid.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect()).unwrap()
}

/// Occupied voxel faces whose neighbour is void or outside, counted
/// directly from the grid.
fn boundary_faces(dims: GridDims, solid: &[bool]) -> usize {
    let ext = [dims.nx as isize, dims.ny as isize, dims.nz as isize];
    let at = |c: [isize; 3]| {
        (0..3).all(|a| c[a] >= 0 && c[a] < ext[a]) && solid[dims.element_index(c[0] as usize, c[1] as usize, c[2] as usize)]
    };
    let mut n = 0;
    for e in 0..dims.n_elements() {
        if !solid[e] {
            continue;
        }
        let c = dims.element_coords(e).map(|x| x as isize);
        for a in 0..3 {
            for d in [-1, 1] {
                let mut m = c;
                m[a] += d;
                if !at(m) {
                    n += 1;
                }
            }
        }
    }
    n
}

#[test]
fn full_grid_keeps_only_the_outer_shell() {
    for n in 1..=5 {
        let dims = GridDims::cube(n);
        let m = VoxelMesh::from_field(&field(dims, &vec![true; dims.n_elements()]), 0.5);
        assert_eq!(m.quads.len(), 6 * n * n);
        // shell vertices of an (n+1)³ lattice
        assert_eq!(m.vertices.len(), (n + 1).pow(3) - (n - 1).pow(3));
    }
}

#[test]
fn export_writes_v_and_f_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bar.obj");
    let dims = GridDims::new(2, 1, 1);
    let m = export_mesh(&field(dims, &[true, true]), 0.5, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), m.vertices.len());
    assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 10);
    assert_eq!(text.lines().count(), m.vertices.len() + 10);
}

#[test]
fn empty_design_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let dims = GridDims::cube(3);
    let d = DensityField::uniform(dims, 0.4);
    let r = export_mesh(&d, 0.5, &dir.path().join("x.obj"));
    assert!(matches!(r, Err(PipelineError::EmptyDesign { .. })));
    assert!(!dir.path().join("x.obj").exists());
    assert!(matches!(export_mesh(&d, 1.0, &dir.path().join("y.obj")), Err(PipelineError::InvalidConfig(_))));
}

proptest! {
    #[test]
    fn face_count_matches_brute_force(nx in 1usize..5, ny in 1usize..5, nz in 1usize..5, bits in any::<u64>()) {
        let dims = GridDims::new(nx, ny, nz);
        let solid: Vec<bool> = (0..dims.n_elements()).map(|e| bits >> (e % 64) & 1 == 1).collect();
        let m = VoxelMesh::from_field(&field(dims, &solid), 0.5);
        prop_assert_eq!(m.quads.len(), boundary_faces(dims, &solid));
    }

    #[test]
    fn every_edge_is_shared_by_an_even_number_of_quads(bits in any::<u64>()) {
        // closed surfaces: each undirected edge appears in an even number of quads
        let dims = GridDims::cube(4);
        let solid: Vec<bool> = (0..64).map(|e| bits >> e & 1 == 1).collect();
        let m = VoxelMesh::from_field(&field(dims, &solid), 0.5);
        let mut edges = std::collections::HashMap::new();
        for q in &m.quads {
            for i in 0..4 {
                let (a, b) = (q[i], q[(i + 1) % 4]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        prop_assert!(edges.values().all(|c| c % 2 == 0));
    }
}
