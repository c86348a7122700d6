//! Small-strain linear elasticity on a regular voxel grid.
//!
//! Every voxel is a unit-cube trilinear hexahedron whose Young's modulus is
//! interpolated from a per-element density with the SIMP power law
//! `E(ρ) = E_void + ρ^p (E_solid - E_void)`. Systems are solved matrix-free
//! with preconditioned conjugate gradients (Jacobi or a geometric multigrid
//! V-cycle).

mod element;
mod error;
mod field;
mod grid;
mod material;
mod multigrid;
mod problem;
mod solver;

pub use element::{element_stiffness, ElementMatrix, GAUSS_POINT};
pub use error::FemError;
pub use field::{DensityField, DisplacementField, StrainEnergyField, CLIP_PERCENTILE};
pub use grid::GridDims;
pub use material::ElasticParams;
pub use problem::{Face, FacePatch, FemProblem, LoadKind, LoadRegion, LoadSpec};
pub use solver::{
    compliance, compliance_element_sum, element_energies, solve, solve_with, strain_energy_field,
    Preconditioner, SolveStats, SolverOptions, StiffnessOperator,
};

pub type Result<T, E = FemError> = std::result::Result<T, E>;
