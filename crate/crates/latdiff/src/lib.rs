//! Conditional denoising diffusion over design latents. A linear variance
//! schedule defines the forward noising chain; a convolutional denoiser
//! learns to predict the added noise from the noisy latent concatenated
//! with the condition latent, and ancestral sampling runs the chain back.
//! Partially noising an existing latent and denoising it gives design
//! edits of controllable strength.

mod denoiser;
mod error;
mod process;
mod schedule;
mod train;

pub use denoiser::{Denoiser, DenoiserConfig, LatentDiffusion, LdmConfig};
pub use error::DiffError;
pub use process::{
    concat_channels, ddpm_loss, ddpm_loss_with, generate, p_sample_step, p_sample_step_with, q_sample, q_sample_batch,
    repeat_batch, standard_normal, translate, Generation, NoisePredictor, TRAJECTORY_SNAPSHOTS,
};
pub use schedule::{make_schedule, NoiseSchedule, ScheduleConfig};
pub use train::{evaluate_ldm, train_ldm, EncodedSet, LdmEpochLog, LdmTrainConfig, LdmTrainLog};
