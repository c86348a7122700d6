//! End-to-end orchestration of voxel design generation: dataset
//! generation, autoencoder and diffusion training, sampling and editing of
//! designs, FEM-based evaluation with CSV reports, and OBJ export.

pub mod cli;
mod config;
mod error;
pub mod eval;
pub mod generate;
pub mod mesh;
pub mod metrics;
pub mod multigrid;
pub mod stages;

pub use config::{
    EvalSolverConfig, MultigridStageConfig, PathsConfig, RunConfig, RunPaths, Stream, SUPPORTED_RESOLUTIONS,
};
pub use error::PipelineError;
pub use eval::{evaluate_designs, write_report, EvalCase, EvalReport, EvalSummary};
pub use mesh::{export_mesh, VoxelMesh};
pub use metrics::{cosine_similarity, volume_fraction};
pub use multigrid::{multigrid_schedule, MultigridLog, StageData};
