//! SIMP compliance minimization on voxel grids and the randomized sampler
//! that turns it into a dataset of (initial strain energy, optimized
//! density) pairs.

mod config;
mod dataset;
mod error;
mod filter;
mod oc;
mod sampler;
mod simp;

pub use config::{LoadRanges, Range, ProblemSamplerConfig, SimpConfig, DEFAULT_VOLFRACS};
pub use dataset::{
    generate_dataset, sample_seed, split_for, Dataset, DatasetManifest, FailedSample, Sample, SampleEntry, Split,
    DATASET_MAGIC, DATASET_VERSION,
};
pub use error::SimpError;
pub use filter::{sensitivity_filter, SensitivityFilter};
pub use oc::{oc_update, RHO_MIN};
pub use sampler::{sample_problem, sample_volfrac};
pub use simp::{run_simp, SimpHistory, SimpOutcome};
