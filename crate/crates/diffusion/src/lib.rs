//! Joint color + transparency latent diffusion: a shared codec maps RGB
//! images and channel-replicated mattes into one latent space, a single
//! denoiser handles matte estimation, matte-conditioned generation, and
//! joint generation, routed by a learned distribution identifier.

pub mod ckpt;
pub mod codec;
pub mod error;
mod nn;
#[cfg(any(test, feature = "refcheck"))]
pub mod refcheck;
pub mod sampler;
pub mod schedule;
pub mod trainer;
pub mod unet;

pub use ckpt::{load_codec, load_model, save_codec, save_model, LoadedModel};
pub use codec::{replicate_matte, train_codec, Codec, CodecConfig, CodecMode, CodecTrainReport};
pub use error::{Error, Result};
pub use sampler::{
    batch_sample, joint_generate, matte_to_rgb, rgb_to_matte, SampleOutput, SampleRequest,
    TaskSpec, TransparentImage, DEFAULT_DDIM_STEPS,
};
pub use schedule::{NoiseSchedule, SamplerPlan};
pub use trainer::{
    build_branch_inputs, cosine_lr, train, training_step, write_history_csv, BranchInput,
    SlotMask, StepReport, TaskMode, TrainConfig, TrainResult, TrainSample,
};
pub use unet::{sincos_embed, DistributionIdentifier, PromptId, UNet, UNetConfig};
