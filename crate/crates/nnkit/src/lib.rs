//! Small 3D convolutional network toolkit: tensors, reverse-mode autodiff
//! over a recorded graph, the layers needed by voxel autoencoders and
//! diffusion denoisers, an adaptive-moment optimizer, finite-difference
//! gradient checks and a binary checkpoint format.
//!
//! Everything runs single-threaded with a fixed reduction order, so a
//! forward or backward pass is bitwise reproducible for given inputs.

mod checkpoint;
mod embed;
mod error;
mod gradcheck;
mod graph;
mod kernels;
mod layers;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use embed::timestep_embedding;
pub use error::NnError;
pub use gradcheck::{check_gradients, GradCheck};
pub use graph::{Graph, Var};
pub use layers::{Conv3d, GroupNorm, Linear, ResBlock};
pub use optim::{adam_step, OptimizerConfig};
pub use params::{Gradients, Moments, ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};
