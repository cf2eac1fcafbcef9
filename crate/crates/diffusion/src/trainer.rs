//! Three-branch training. Per sample, one timestep and one noise draw per
//! modality are shared across the branches, so the joint branch's target
//! is exactly the channel concatenation of the two single-branch targets.

use rayon::prelude::*;
use zippo_core::tensor::stack_batch;
use zippo_core::{backward, rng, AdamConfig, AdamState, AlphaMatte, Image, Tensor};

use crate::codec::{replicate_matte, Codec};
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::unet::{DistributionIdentifier, PromptId, UNet, UNetConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMode {
    /// R2M branch only.
    Single,
    /// R2M + M2R.
    Dual,
    /// R2M + M2R + joint.
    Full,
}

impl TaskMode {
    pub fn parse(s: &str) -> Result<TaskMode> {
        match s {
            "single" => Ok(TaskMode::Single),
            "dual" => Ok(TaskMode::Dual),
            "full" => Ok(TaskMode::Full),
            other => Err(Error::config(format!(
                "unknown mode {:?}, expected single|dual|full",
                other
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskMode::Single => "single",
            TaskMode::Dual => "dual",
            TaskMode::Full => "full",
        }
    }

    pub fn index(self) -> usize {
        match self {
            TaskMode::Single => 0,
            TaskMode::Dual => 1,
            TaskMode::Full => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<TaskMode> {
        match i {
            0 => Ok(TaskMode::Single),
            1 => Ok(TaskMode::Dual),
            2 => Ok(TaskMode::Full),
            _ => Err(Error::config(format!("mode index {} outside 0..=2", i))),
        }
    }

    pub fn has_m2r(self) -> bool {
        self != TaskMode::Single
    }

    pub fn has_joint(self) -> bool {
        self == TaskMode::Full
    }
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: Image,
    pub matte: AlphaMatte,
    pub prompt: PromptId,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub base_lr: f32,
    pub seed: u64,
    pub mode: TaskMode,
    pub loss_weights: (f32, f32, f32),
    pub t_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 16,
            base_lr: 1e-3,
            seed: 0,
            mode: TaskMode::Full,
            loss_weights: (1.0, 1.0, 1.0),
            t_max: crate::schedule::DEFAULT_T,
            beta_start: crate::schedule::DEFAULT_BETA_START,
            beta_end: crate::schedule::default_beta_end(crate::schedule::DEFAULT_T),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: usize,
    pub l_r2m: f32,
    pub l_m2r: Option<f32>,
    pub l_joint: Option<f32>,
    pub total: f32,
    pub lr: f32,
}

/// Half-cosine decay from `base_lr` at step 0 to 0 at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f32) -> Result<f32> {
    if step > total_steps {
        return Err(Error::config(format!(
            "cosine_lr: step {} beyond total {}",
            step, total_steps
        )));
    }
    let phase = std::f64::consts::PI * step as f64 / total_steps as f64;
    Ok((base_lr as f64 * 0.5 * (1.0 + phase.cos())) as f32)
}

/// Which output slot(s) a branch supervises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotMask {
    RgbSlot,
    MatteSlot,
    Both,
}

/// One branch's assembled training pass for a single sample.
pub struct BranchInput {
    pub input: Tensor,
    pub identifier: DistributionIdentifier,
    pub prompt: PromptId,
    /// Noise target for the supervised slot(s): C channels for the single
    /// branches, 2C for the joint branch.
    pub target: Tensor,
    pub mask: SlotMask,
}

/// Assemble the three branch passes from one sample's clean latents and
/// the shared noise draws. The same noised tensors are reused across
/// branches, which makes the reassignment identity exact:
/// the joint target is `cat(eps_hat, eps)` and the joint input's noised
/// slots are the single branches' noised slots.
pub fn build_branch_inputs(
    z_x: &Tensor,
    z_a: &Tensor,
    eps_hat: &Tensor,
    eps: &Tensor,
    t: usize,
    c: PromptId,
    schedule: &NoiseSchedule,
) -> Result<[BranchInput; 3]> {
    if z_x.shape() != z_a.shape() || z_x.shape() != eps_hat.shape() || z_x.shape() != eps.shape() {
        return Err(zippo_core::Error::shape(
            "build_branch_inputs",
            format!(
                "latent/noise shapes differ: {:?} {:?} {:?} {:?}",
                z_x.shape(),
                z_a.shape(),
                eps_hat.shape(),
                eps.shape()
            ),
        )
        .into());
    }
    let noised_x = schedule.add_noise(z_x, eps_hat, t)?;
    let noised_a = schedule.add_noise(z_a, eps, t)?;

    let r2m = BranchInput {
        input: z_x.concat_channels(&noised_a)?,
        identifier: DistributionIdentifier::R2M,
        prompt: PromptId::EMPTY,
        target: eps.clone(),
        mask: SlotMask::MatteSlot,
    };
    let m2r = BranchInput {
        input: noised_x.concat_channels(z_a)?,
        identifier: DistributionIdentifier::M2R,
        prompt: c,
        target: eps_hat.clone(),
        mask: SlotMask::RgbSlot,
    };
    let joint = BranchInput {
        input: noised_x.concat_channels(&noised_a)?,
        identifier: DistributionIdentifier::Joint,
        prompt: c,
        target: eps_hat.concat_channels(eps)?,
        mask: SlotMask::Both,
    };
    Ok([r2m, m2r, joint])
}

/// Per-sample noise and timestep draws, keyed by (seed, step, sample) so
/// concurrency never perturbs them.
pub(crate) fn draw_noise(
    seed: u64,
    step: usize,
    sample: usize,
    shape: &[usize],
    t_max: usize,
) -> (Tensor, Tensor, usize) {
    let mut r = rng::stream(seed, &[0xE125, step as u64, sample as u64]);
    let t = 1 + rng::uniform_index(&mut r, t_max);
    let eps_hat = rng::normal_tensor(&mut r, shape);
    let eps = rng::normal_tensor(&mut r, shape);
    (eps_hat, eps, t)
}

pub(crate) struct EncodedSet {
    pub z_x: Vec<Tensor>,
    pub z_a: Vec<Tensor>,
    pub prompts: Vec<PromptId>,
}

pub(crate) fn encode_dataset(dataset: &[TrainSample], codec: &Codec) -> Result<EncodedSet> {
    let pairs: Vec<(Tensor, Tensor)> = dataset
        .par_iter()
        .map(|s| {
            let z_x = codec.encode(&s.image)?;
            let z_a = codec.encode(&replicate_matte(&s.matte))?;
            Ok((z_x, z_a))
        })
        .collect::<Result<_>>()?;
    let (z_x, z_a) = pairs.into_iter().unzip();
    Ok(EncodedSet {
        z_x,
        z_a,
        prompts: dataset.iter().map(|s| s.prompt).collect(),
    })
}

struct BranchBatch {
    input: Tensor,
    target: Tensor,
    prompts: Vec<PromptId>,
    identifier: DistributionIdentifier,
    mask: SlotMask,
}

fn masked_loss(output: &Tensor, batch: &BranchBatch, c: usize) -> Result<Tensor> {
    let loss = match batch.mask {
        SlotMask::MatteSlot => {
            let (_, matte_out) = output.split_channels(c)?;
            matte_out.mse(&batch.target)?
        }
        SlotMask::RgbSlot => {
            let (rgb_out, _) = output.split_channels(c)?;
            rgb_out.mse(&batch.target)?
        }
        SlotMask::Both => output.mse(&batch.target)?,
    };
    Ok(loss)
}

/// One optimizer step over an encoded batch. Returns the per-branch
/// losses actually trained in this mode.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_on_latents(
    unet: &mut UNet,
    adam: &mut AdamState,
    encoded: &EncodedSet,
    indices: &[usize],
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    step: usize,
) -> Result<StepReport> {
    let c = unet.config().latent_channels;
    let mut ts = Vec::with_capacity(indices.len());
    let mut per_branch: [Vec<BranchInput>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (slot, &idx) in indices.iter().enumerate() {
        let z_x = &encoded.z_x[idx];
        let z_a = &encoded.z_a[idx];
        let (eps_hat, eps, t) = draw_noise(cfg.seed, step, slot, z_x.shape(), schedule.t_max());
        let branches =
            build_branch_inputs(z_x, z_a, &eps_hat, &eps, t, encoded.prompts[idx], schedule)?;
        ts.push(t);
        for (b, branch) in branches.into_iter().enumerate() {
            per_branch[b].push(branch);
        }
    }

    let stack_branch = |items: &[BranchInput]| -> Result<BranchBatch> {
        let inputs: Vec<&Tensor> = items.iter().map(|b| &b.input).collect();
        let targets: Vec<&Tensor> = items.iter().map(|b| &b.target).collect();
        Ok(BranchBatch {
            input: stack_batch(&inputs)?,
            target: stack_batch(&targets)?,
            prompts: items.iter().map(|b| b.prompt).collect(),
            identifier: items[0].identifier,
            mask: items[0].mask,
        })
    };

    let branch_loss = |unet: &UNet, batch: &BranchBatch| -> Result<Tensor> {
        let out = unet.forward(&batch.input, &ts, &batch.prompts, batch.identifier)?;
        masked_loss(&out, batch, c)
    };

    let (w_r2m, w_m2r, w_joint) = cfg.loss_weights;

    let r2m_batch = stack_branch(&per_branch[0])?;
    let l_r2m = branch_loss(unet, &r2m_batch)?;
    let v_r2m = l_r2m.scalar_value()?;
    if !v_r2m.is_finite() {
        return Err(Error::NonFiniteLoss { branch: "r2m", step });
    }
    let mut total = l_r2m.scale(w_r2m);

    let mut v_m2r = None;
    if cfg.mode.has_m2r() {
        let batch = stack_branch(&per_branch[1])?;
        let l = branch_loss(unet, &batch)?;
        let v = l.scalar_value()?;
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss { branch: "m2r", step });
        }
        v_m2r = Some(v);
        total = total.add(&l.scale(w_m2r))?;
    }

    let mut v_joint = None;
    if cfg.mode.has_joint() {
        let batch = stack_branch(&per_branch[2])?;
        let l = branch_loss(unet, &batch)?;
        let v = l.scalar_value()?;
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss { branch: "joint", step });
        }
        v_joint = Some(v);
        total = total.add(&l.scale(w_joint))?;
    }

    let total_value = total.scalar_value()?;
    let grads = backward(&total)?;
    let lr = cosine_lr(step, cfg.steps, cfg.base_lr)?;
    adam.step(&mut unet.params_mut(), &grads, lr)?;

    Ok(StepReport {
        step,
        l_r2m: v_r2m,
        l_m2r: v_m2r,
        l_joint: v_joint,
        total: total_value,
        lr,
    })
}

/// One training step straight from pixel-domain samples (encodes through
/// the frozen codec first). [`train`] precomputes latents instead, which
/// is numerically identical because the codec is deterministic.
pub fn training_step(
    batch: &[TrainSample],
    unet: &mut UNet,
    adam: &mut AdamState,
    codec: &Codec,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    step: usize,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::config("training_step: empty batch"));
    }
    let encoded = encode_dataset(batch, codec)?;
    let indices: Vec<usize> = (0..batch.len()).collect();
    step_on_latents(unet, adam, &encoded, &indices, schedule, cfg, step)
}

pub struct TrainResult {
    pub unet: UNet,
    pub schedule: NoiseSchedule,
    pub history: Vec<StepReport>,
}

/// Full training run: encode the dataset once through the frozen codec,
/// then `cfg.steps` optimizer steps with seeded batch sampling.
pub fn train(
    dataset: &[TrainSample],
    unet_cfg: UNetConfig,
    codec: &Codec,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepReport),
) -> Result<TrainResult> {
    if dataset.is_empty() {
        return Err(Error::config("train: empty dataset"));
    }
    let schedule = NoiseSchedule::make(cfg.t_max, cfg.beta_start, cfg.beta_end)?;
    let encoded = encode_dataset(dataset, codec)?;
    let mut unet = UNet::new(unet_cfg, cfg.seed)?;
    let mut adam = AdamState::new(AdamConfig::default());
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch_rng = rng::stream(cfg.seed, &[0xBA7C4, step as u64]);
        let indices: Vec<usize> = (0..cfg.batch_size)
            .map(|_| rng::uniform_index(&mut batch_rng, dataset.len()))
            .collect();
        let report = step_on_latents(&mut unet, &mut adam, &encoded, &indices, &schedule, cfg, step)?;
        on_step(&report);
        history.push(report);
    }
    Ok(TrainResult {
        unet,
        schedule,
        history,
    })
}

/// Loss-history CSV: `step,l_r2m,l_m2r,l_joint,lr`, empty cells for
/// branches not trained in the active mode.
pub fn write_history_csv(path: &std::path::Path, history: &[StepReport]) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(zippo_core::Error::from)?);
    writeln!(f, "step,l_r2m,l_m2r,l_joint,lr").map_err(zippo_core::Error::from)?;
    for r in history {
        let m2r = r.l_m2r.map(|v| format!("{v}")).unwrap_or_default();
        let joint = r.l_joint.map(|v| format!("{v}")).unwrap_or_default();
        writeln!(f, "{},{},{},{},{}", r.step, r.l_r2m, m2r, joint, r.lr)
            .map_err(zippo_core::Error::from)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecConfig;

    fn tiny_codec() -> Codec {
        Codec::new(CodecConfig::pixel_identity(), 0).unwrap()
    }

    fn tiny_unet_cfg() -> UNetConfig {
        UNetConfig {
            latent_channels: 3, // pixel-identity latents are 3-channel
            base_width: 8,
            levels: 2,
            embed_dim: 16,
            prompt_vocab: 4,
            norm_groups: 4,
        }
    }

    fn tiny_dataset(n: usize) -> Vec<TrainSample> {
        (0..n)
            .map(|i| {
                let shade = (i % 7) as f32 / 7.0;
                let image = Image::from_fn(8, 8, |c, x, y| {
                    if x >= 2 && x < 6 && y >= 2 && y < 6 {
                        [shade, 1.0 - shade, 0.5][c]
                    } else {
                        0.0
                    }
                });
                let matte = AlphaMatte::from_fn(8, 8, |x, y| {
                    f32::from(x >= 2 && x < 6 && y >= 2 && y < 6)
                });
                TrainSample {
                    image,
                    matte,
                    prompt: PromptId(1 + i % 2),
                }
            })
            .collect()
    }

    fn tiny_train_cfg(steps: usize, mode: TaskMode) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 2,
            base_lr: 1e-3,
            seed: 42,
            mode,
            t_max: 20,
            beta_start: 1e-3,
            beta_end: 0.05,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 0.5).unwrap(), 0.5);
        assert!((cosine_lr(50, 100, 0.5).unwrap() - 0.25).abs() < 1e-7);
        assert!(cosine_lr(100, 100, 0.5).unwrap().abs() < 1e-9);
        assert!(cosine_lr(101, 100, 0.5).is_err());
        // non-increasing over the whole range
        let mut last = f32::INFINITY;
        for s in 0..=100 {
            let lr = cosine_lr(s, 100, 0.5).unwrap();
            assert!(lr <= last);
            last = lr;
        }
    }

    #[test]
    fn noise_reassignment_identity_is_bit_exact() {
        let schedule = NoiseSchedule::with_defaults(50).unwrap();
        let mut r = rng::stream(3, &[0xAB]);
        for trial in 0..100 {
            let z_x = rng::normal_tensor(&mut r, &[4, 4, 4]);
            let z_a = rng::normal_tensor(&mut r, &[4, 4, 4]);
            let eps_hat = rng::normal_tensor(&mut r, &[4, 4, 4]);
            let eps = rng::normal_tensor(&mut r, &[4, 4, 4]);
            let t = 1 + trial % 50;
            let [r2m, m2r, joint] =
                build_branch_inputs(&z_x, &z_a, &eps_hat, &eps, t, PromptId(1), &schedule)
                    .unwrap();

            // joint target == cat(m2r target, r2m target), bitwise
            let cat = m2r.target.concat_channels(&r2m.target).unwrap();
            assert_eq!(joint.target.data(), cat.data());

            // joint noised slots == the single branches' noised slots, bitwise
            let (joint_rgb, joint_matte) = joint.input.split_channels(4).unwrap();
            let (m2r_rgb, _) = m2r.input.split_channels(4).unwrap();
            let (_, r2m_matte) = r2m.input.split_channels(4).unwrap();
            assert_eq!(joint_rgb.data(), m2r_rgb.data());
            assert_eq!(joint_matte.data(), r2m_matte.data());

            // branch metadata
            assert_eq!(r2m.identifier, DistributionIdentifier::R2M);
            assert_eq!(r2m.prompt, PromptId::EMPTY);
            assert_eq!(m2r.identifier, DistributionIdentifier::M2R);
            assert_eq!(m2r.prompt, PromptId(1));
            assert_eq!(joint.identifier, DistributionIdentifier::Joint);
            assert_eq!(r2m.mask, SlotMask::MatteSlot);
            assert_eq!(m2r.mask, SlotMask::RgbSlot);
            assert_eq!(joint.mask, SlotMask::Both);
        }
    }

    #[test]
    fn zero_noise_reduces_to_scaled_clean_latents() {
        let schedule = NoiseSchedule::with_defaults(50).unwrap();
        let mut r = rng::stream(4, &[0xAC]);
        let z_x = rng::normal_tensor(&mut r, &[2, 3, 3]);
        let z_a = rng::normal_tensor(&mut r, &[2, 3, 3]);
        let zero = Tensor::zeros(&[2, 3, 3]);
        let t = 7;
        let [r2m, m2r, joint] =
            build_branch_inputs(&z_x, &z_a, &zero, &zero, t, PromptId(0), &schedule).unwrap();
        let a = schedule.alpha_bar(t).sqrt() as f32;
        let (_, r2m_matte) = r2m.input.split_channels(2).unwrap();
        for (v, z) in r2m_matte.data().iter().zip(z_a.data()) {
            assert!((v - a * z).abs() < 1e-6);
        }
        let (m2r_rgb, _) = m2r.input.split_channels(2).unwrap();
        for (v, z) in m2r_rgb.data().iter().zip(z_x.data()) {
            assert!((v - a * z).abs() < 1e-6);
        }
        let (jr, jm) = joint.input.split_channels(2).unwrap();
        assert_eq!(jr.data(), m2r_rgb.data());
        assert_eq!(jm.data(), r2m_matte.data());
    }

    #[test]
    fn single_mode_reports_and_masks() {
        let codec = tiny_codec();
        let dataset = tiny_dataset(4);
        let cfg = tiny_train_cfg(4, TaskMode::Single);
        let schedule = NoiseSchedule::make(cfg.t_max, cfg.beta_start, cfg.beta_end).unwrap();
        let mut unet = UNet::new(tiny_unet_cfg(), cfg.seed).unwrap();
        let mut adam = AdamState::new(AdamConfig::default());
        let report =
            training_step(&dataset, &mut unet, &mut adam, &codec, &schedule, &cfg, 0).unwrap();
        assert!(report.l_m2r.is_none());
        assert!(report.l_joint.is_none());
        assert!(report.l_r2m.is_finite());

        // Masking: under the matte-slot loss the RGB-slot rows of the final
        // conv receive exactly zero gradient.
        let encoded = encode_dataset(&dataset, &codec).unwrap();
        let indices = [0usize, 1];
        let c = unet.config().latent_channels;
        let mut branches = Vec::new();
        let mut ts = Vec::new();
        for (slot, &idx) in indices.iter().enumerate() {
            let (eps_hat, eps, t) =
                draw_noise(cfg.seed, 1, slot, encoded.z_x[idx].shape(), schedule.t_max());
            let [r2m, _, _] = build_branch_inputs(
                &encoded.z_x[idx],
                &encoded.z_a[idx],
                &eps_hat,
                &eps,
                t,
                encoded.prompts[idx],
                &schedule,
            )
            .unwrap();
            ts.push(t);
            branches.push(r2m);
        }
        let inputs: Vec<&Tensor> = branches.iter().map(|b| &b.input).collect();
        let targets: Vec<&Tensor> = branches.iter().map(|b| &b.target).collect();
        let out = unet
            .forward(
                &stack_batch(&inputs).unwrap(),
                &ts,
                &vec![PromptId::EMPTY; 2],
                DistributionIdentifier::R2M,
            )
            .unwrap();
        let (_, matte_out) = out.split_channels(c).unwrap();
        let loss = matte_out.mse(&stack_batch(&targets).unwrap()).unwrap();
        let grads = backward(&loss).unwrap();
        let conv_out_w = unet
            .params()
            .into_iter()
            .find(|p| p.name() == "unet.conv_out.weight")
            .unwrap()
            .tensor()
            .clone();
        let g = grads.get(&conv_out_w).unwrap();
        let per_row = conv_out_w.numel() / (2 * c);
        // RGB-slot output rows [0, C): zero gradient, bitwise.
        assert!(g[..c * per_row].iter().all(|&v| v == 0.0));
        // matte-slot rows receive signal
        assert!(g[c * per_row..].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn full_mode_step_changes_params() {
        let codec = tiny_codec();
        let dataset = tiny_dataset(2);
        let cfg = tiny_train_cfg(4, TaskMode::Full);
        let schedule = NoiseSchedule::make(cfg.t_max, cfg.beta_start, cfg.beta_end).unwrap();
        let mut unet = UNet::new(tiny_unet_cfg(), cfg.seed).unwrap();
        let before: Vec<f32> = unet.params()[0].tensor().data().to_vec();
        let mut adam = AdamState::new(AdamConfig::default());
        let report =
            training_step(&dataset, &mut unet, &mut adam, &codec, &schedule, &cfg, 0).unwrap();
        assert!(report.l_r2m.is_finite() && report.l_r2m >= 0.0);
        assert!(report.l_m2r.unwrap().is_finite());
        assert!(report.l_joint.unwrap().is_finite());
        assert!(report.total.is_finite());
        let after: Vec<f32> = unet.params()[0].tensor().data().to_vec();
        assert_ne!(before, after);
    }

    #[test]
    fn training_is_deterministic_under_fixed_seed() {
        let codec = tiny_codec();
        let dataset = tiny_dataset(4);
        let cfg = tiny_train_cfg(3, TaskMode::Full);
        let run = |_: ()| {
            let result = train(&dataset, tiny_unet_cfg(), &codec, &cfg, |_| {}).unwrap();
            let reports: Vec<(f32, Option<f32>, Option<f32>, f32)> = result
                .history
                .iter()
                .map(|r| (r.l_r2m, r.l_m2r, r.l_joint, r.lr))
                .collect();
            let params: Vec<Vec<f32>> = result
                .unet
                .params()
                .iter()
                .map(|p| p.tensor().data().to_vec())
                .collect();
            (reports, params)
        };
        let (ra, pa) = run(());
        let (rb, pb) = run(());
        assert_eq!(ra, rb);
        assert_eq!(pa, pb);
    }

    #[test]
    fn empty_dataset_and_batch_rejected() {
        let codec = tiny_codec();
        let cfg = tiny_train_cfg(1, TaskMode::Single);
        assert!(train(&[], tiny_unet_cfg(), &codec, &cfg, |_| {}).is_err());
        let schedule = NoiseSchedule::make(cfg.t_max, cfg.beta_start, cfg.beta_end).unwrap();
        let mut unet = UNet::new(tiny_unet_cfg(), 0).unwrap();
        let mut adam = AdamState::new(AdamConfig::default());
        assert!(
            training_step(&[], &mut unet, &mut adam, &codec, &schedule, &cfg, 0).is_err()
        );
    }
}
