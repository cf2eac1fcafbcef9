//! Task-level inference. Conditioned slots carry the clean encoding at
//! every reverse step; only the generated slot is denoised. All samplers
//! are deterministic functions of (checkpoint, request).

use zippo_core::{rng, AlphaMatte, Image, Tensor};

use crate::codec::{replicate_matte, Codec};
use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, SamplerPlan};
use crate::unet::{DistributionIdentifier, PromptId, UNet};

/// Paired color image and alpha matte with equal dims.
#[derive(Debug, Clone)]
pub struct TransparentImage {
    pub color: Image,
    pub alpha: AlphaMatte,
}

#[derive(Debug, Clone)]
pub enum TaskSpec {
    RgbToMatte { image: Image },
    MatteToRgb { matte: AlphaMatte, prompt: PromptId },
    Joint { prompt: PromptId },
}

#[derive(Debug, Clone)]
pub struct SampleRequest {
    pub task: TaskSpec,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum SampleOutput {
    Matte(AlphaMatte),
    Image(Image),
    Transparent(TransparentImage),
}

pub const DEFAULT_DDIM_STEPS: usize = 20;

fn noise_like(shape: &[usize], seed: u64, tag: u64) -> Tensor {
    rng::normal_tensor(&mut rng::stream(seed, &[tag]), shape)
}

/// Denoise one slot while the other carries a fixed clean latent.
fn denoise_conditioned(
    clean: &Tensor,
    unet: &UNet,
    schedule: &NoiseSchedule,
    steps: usize,
    seed: u64,
    d: DistributionIdentifier,
    prompt: PromptId,
) -> Result<Tensor> {
    let c = unet.config().latent_channels;
    let clean_first = matches!(d, DistributionIdentifier::R2M);
    let mut z = noise_like(clean.shape(), seed, d.index() as u64);
    let plan = SamplerPlan::make(schedule.t_max(), steps)?;
    for (t, t_prev) in plan.hops() {
        let joint = if clean_first {
            clean.concat_channels(&z)?
        } else {
            z.concat_channels(clean)?
        };
        // The conditioned slot must be bit-identical to its clean encoding
        // at every step.
        debug_assert!({
            let side = if clean_first {
                &joint.data()[..clean.numel()]
            } else {
                &joint.data()[clean.numel()..]
            };
            side == clean.data()
        });
        let pred = unet.forward_one(&joint, t, prompt, d)?;
        let (rgb_pred, matte_pred) = pred.split_channels(c)?;
        let slot_pred = if clean_first { matte_pred } else { rgb_pred };
        z = schedule.ddim_step(&z, &slot_pred.detach(), t, t_prev)?;
    }
    Ok(z)
}

/// Estimate the alpha matte of an image. The RGB slot holds the clean
/// encoding throughout; the matte slot starts from unit Gaussian noise and
/// is denoised under the R2M identifier with the empty prompt.
pub fn rgb_to_matte(
    image: &Image,
    unet: &UNet,
    codec: &Codec,
    schedule: &NoiseSchedule,
    steps: usize,
    seed: u64,
) -> Result<AlphaMatte> {
    let z_x = codec.encode(image)?;
    let z_a = denoise_conditioned(
        &z_x,
        unet,
        schedule,
        steps,
        seed,
        DistributionIdentifier::R2M,
        PromptId::EMPTY,
    )?;
    codec.decode_matte(&z_a)
}

/// Generate an RGB image that matches the given matte, with content chosen
/// by the prompt. Mirror image of [`rgb_to_matte`].
pub fn matte_to_rgb(
    matte: &AlphaMatte,
    prompt: PromptId,
    unet: &UNet,
    codec: &Codec,
    schedule: &NoiseSchedule,
    steps: usize,
    seed: u64,
) -> Result<Image> {
    let z_a = codec.encode(&replicate_matte(matte))?;
    let z_x = denoise_conditioned(
        &z_a,
        unet,
        schedule,
        steps,
        seed,
        DistributionIdentifier::M2R,
        prompt,
    )?;
    codec.decode(&z_x)
}

/// Generate a paired image and matte from two independent noise draws,
/// denoised jointly, then split at the slot boundary and decoded.
pub fn joint_generate(
    prompt: PromptId,
    unet: &UNet,
    codec: &Codec,
    schedule: &NoiseSchedule,
    steps: usize,
    seed: u64,
    latent_hw: (usize, usize),
) -> Result<TransparentImage> {
    let c = unet.config().latent_channels;
    let (h, w) = latent_hw;
    let z_x0 = noise_like(&[c, h, w], seed, 0x10);
    let z_a0 = noise_like(&[c, h, w], seed, 0x11);
    let mut z = z_x0.concat_channels(&z_a0)?;
    let plan = SamplerPlan::make(schedule.t_max(), steps)?;
    for (t, t_prev) in plan.hops() {
        let pred = unet.forward_one(&z, t, prompt, DistributionIdentifier::Joint)?;
        z = schedule.ddim_step(&z, &pred.detach(), t, t_prev)?;
    }
    let (z_x, z_a) = z.split_channels(c)?;
    Ok(TransparentImage {
        color: codec.decode(&z_x)?,
        alpha: codec.decode_matte(&z_a)?,
    })
}

/// Run a batch of requests in order. Conditions must share dimensions.
pub fn batch_sample(
    requests: &[SampleRequest],
    unet: &UNet,
    codec: &Codec,
    schedule: &NoiseSchedule,
    default_hw: (usize, usize),
) -> Result<Vec<SampleOutput>> {
    let mut dims: Option<(usize, usize)> = None;
    for r in requests {
        let d = match &r.task {
            TaskSpec::RgbToMatte { image } => Some((image.width(), image.height())),
            TaskSpec::MatteToRgb { matte, .. } => Some((matte.width(), matte.height())),
            TaskSpec::Joint { .. } => None,
        };
        if let Some(d) = d {
            match dims {
                None => dims = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::config(format!(
                        "batch_sample: mixed condition dims {:?} vs {:?}",
                        prev, d
                    )));
                }
                _ => {}
            }
        }
    }
    let f = codec.downscale();
    let latent_hw = dims
        .map(|(w, h)| (h / f, w / f))
        .unwrap_or(default_hw);
    requests
        .iter()
        .map(|r| {
            Ok(match &r.task {
                TaskSpec::RgbToMatte { image } => SampleOutput::Matte(rgb_to_matte(
                    image, unet, codec, schedule, r.steps, r.seed,
                )?),
                TaskSpec::MatteToRgb { matte, prompt } => SampleOutput::Image(matte_to_rgb(
                    matte, *prompt, unet, codec, schedule, r.steps, r.seed,
                )?),
                TaskSpec::Joint { prompt } => SampleOutput::Transparent(joint_generate(
                    *prompt, unet, codec, schedule, r.steps, r.seed, latent_hw,
                )?),
            })
        })
        .collect()
}
