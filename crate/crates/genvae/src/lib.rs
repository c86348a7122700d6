//! Two-headed voxel autoencoder. The condition head compresses the initial
//! strain-energy field through a vector-quantized bottleneck, the design
//! head compresses the optimized density into a diagonal Gaussian, and a
//! single decoder maps the concatenated latents back to a density grid.
//!
//! Both latents have `latent_channels` channels and a quarter of the grid
//! resolution per axis. The networks are fully convolutional, so weights
//! trained on one resolution apply to any grid divisible by four.

mod config;
pub mod data;
mod error;
mod loss;
mod model;
mod quantize;
mod train;

pub use config::{VaeConfig, VaeTrainConfig};
pub use error::VaeError;
pub use loss::{kl_divergence, vae_loss, vae_loss_nodes, LossNodes, LossWeights, VaeLossReport};
pub use model::{ConditionNodes, GaussianPosterior, QuantizedCondition, Vae, LATENT_STRIDE, LOGVAR_RANGE};
pub use quantize::{lookup, nearest_codes, quantize};
pub use train::{reconstruction_error, train_vae, EpochLog, TrainLog};
