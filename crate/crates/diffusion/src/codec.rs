//! Shared latent codec: one encoder/decoder pair maps RGB images into a
//! compact latent space, and the same weights handle alpha mattes after
//! channel replication. A pixel-identity mode bypasses learning entirely
//! for fast tests.

use rayon::prelude::*;
use zippo_core::checkpoint::Section;
use zippo_core::{rng, AdamConfig, AdamState, AlphaMatte, Image, Parameter, Tensor};

use crate::error::{Error, Result};
use crate::nn::{load_params, sections_of, Conv2d, GroupNorm};
use crate::trainer::cosine_lr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecMode {
    TrainedAutoencoder,
    PixelIdentity,
}

#[derive(Debug, Clone, Copy)]
pub struct CodecConfig {
    /// Latent channel count C.
    pub latent_channels: usize,
    /// Spatial downscale factor f (power of two).
    pub downscale: usize,
    pub base_width: usize,
    pub mode: CodecMode,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            latent_channels: 4,
            downscale: 4,
            base_width: 16,
            mode: CodecMode::TrainedAutoencoder,
        }
    }
}

impl CodecConfig {
    pub fn pixel_identity() -> CodecConfig {
        CodecConfig {
            latent_channels: 3,
            downscale: 1,
            base_width: 0,
            mode: CodecMode::PixelIdentity,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.downscale.is_power_of_two() {
            return Err(Error::config(format!(
                "codec downscale {} must be a power of two",
                self.downscale
            )));
        }
        if self.mode == CodecMode::PixelIdentity
            && (self.latent_channels != 3 || self.downscale != 1)
        {
            return Err(Error::config(
                "pixel-identity codec requires latent_channels=3, downscale=1",
            ));
        }
        Ok(())
    }
}

const NORM_GROUPS: usize = 8;

struct Trained {
    enc_stem: Conv2d,
    enc_blocks: Vec<(GroupNorm, Conv2d)>, // stride-2 downsampling stages
    enc_norm_out: GroupNorm,
    enc_head: Conv2d,
    dec_in: Conv2d,
    dec_blocks: Vec<(GroupNorm, Conv2d)>, // conv then 2x upsample per stage
    dec_norm_out: GroupNorm,
    dec_out: Conv2d,
}

/// Encoder/decoder pair over the unified latent space. Immutable after
/// training; encode/decode are safe to call concurrently.
pub struct Codec {
    cfg: CodecConfig,
    net: Option<Trained>,
}

/// Turn a single-channel matte into a 3-channel image by channel
/// replication, so mattes ride the RGB codec unchanged.
pub fn replicate_matte(matte: &AlphaMatte) -> Image {
    Image::from_fn(matte.width(), matte.height(), |_, x, y| matte.get(x, y))
}

impl Codec {
    pub fn new(cfg: CodecConfig, seed: u64) -> Result<Codec> {
        cfg.validate()?;
        if cfg.mode == CodecMode::PixelIdentity {
            return Ok(Codec { cfg, net: None });
        }
        let n_down = cfg.downscale.trailing_zeros() as usize;
        let w = cfg.base_width;
        if w == 0 || w % NORM_GROUPS != 0 {
            return Err(Error::config(format!(
                "codec base width {} must be a positive multiple of {}",
                w, NORM_GROUPS
            )));
        }
        let mut r = rng::stream(seed, &[0xC0DEC]);
        let widths: Vec<usize> = (0..=n_down).map(|i| w << i).collect();
        let top = *widths.last().unwrap();

        let enc_stem = Conv2d::new("codec.enc.stem", 3, widths[0], 3, 1, 1, &mut r);
        let mut enc_blocks = Vec::new();
        for i in 0..n_down {
            enc_blocks.push((
                GroupNorm::new(&format!("codec.enc.down{i}.norm"), widths[i], NORM_GROUPS),
                Conv2d::new(
                    &format!("codec.enc.down{i}.conv"),
                    widths[i],
                    widths[i + 1],
                    3,
                    2,
                    1,
                    &mut r,
                ),
            ));
        }
        let enc_norm_out = GroupNorm::new("codec.enc.norm_out", top, NORM_GROUPS);
        let enc_head = Conv2d::new("codec.enc.head", top, cfg.latent_channels, 3, 1, 1, &mut r);

        let dec_in = Conv2d::new("codec.dec.stem", cfg.latent_channels, top, 3, 1, 1, &mut r);
        let mut dec_blocks = Vec::new();
        for i in (0..n_down).rev() {
            dec_blocks.push((
                GroupNorm::new(&format!("codec.dec.up{i}.norm"), widths[i + 1], NORM_GROUPS),
                Conv2d::new(
                    &format!("codec.dec.up{i}.conv"),
                    widths[i + 1],
                    widths[i],
                    3,
                    1,
                    1,
                    &mut r,
                ),
            ));
        }
        let dec_norm_out = GroupNorm::new("codec.dec.norm_out", widths[0], NORM_GROUPS);
        let dec_out = Conv2d::new("codec.dec.head", widths[0], 3, 3, 1, 1, &mut r);

        Ok(Codec {
            cfg,
            net: Some(Trained {
                enc_stem,
                enc_blocks,
                enc_norm_out,
                enc_head,
                dec_in,
                dec_blocks,
                dec_norm_out,
                dec_out,
            }),
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.cfg
    }

    pub fn latent_channels(&self) -> usize {
        self.cfg.latent_channels
    }

    pub fn downscale(&self) -> usize {
        self.cfg.downscale
    }

    fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        let f = self.cfg.downscale;
        if width % f != 0 || height % f != 0 {
            return Err(Error::config(format!(
                "image dims {}x{} not divisible by codec downscale {}",
                width, height, f
            )));
        }
        Ok(())
    }

    /// Encoder over a `[N,3,H,W]` batch (graph-free; inputs are data).
    fn encode_tensor(&self, x: &Tensor) -> Result<Tensor> {
        match &self.net {
            None => Ok(x.clone()),
            Some(net) => {
                let mut h = net.enc_stem.forward(x)?;
                for (norm, conv) in &net.enc_blocks {
                    h = conv.forward(&norm.forward(&h)?.silu())?;
                }
                net.enc_head.forward(&net.enc_norm_out.forward(&h)?.silu())
            }
        }
    }

    /// Raw decoder output before clamping; keeps the graph alive when the
    /// latent requires gradients (used by codec training only).
    fn decode_tensor(&self, z: &Tensor) -> Result<Tensor> {
        match &self.net {
            None => Ok(z.clone()),
            Some(net) => {
                let mut h = net.dec_in.forward(z)?;
                for (norm, conv) in &net.dec_blocks {
                    h = conv.forward(&norm.forward(&h)?.silu())?.upsample_nearest2x()?;
                }
                net.dec_out.forward(&net.dec_norm_out.forward(&h)?.silu())
            }
        }
    }

    /// Deterministic latent of shape `[C, H/f, W/f]`.
    pub fn encode(&self, image: &Image) -> Result<Tensor> {
        self.check_dims(image.width(), image.height())?;
        let x = image.to_tensor().reshape(&[1, 3, image.height(), image.width()])?;
        let z = self.encode_tensor(&x)?;
        let &[_, c, h, w] = z.shape() else { unreachable!() };
        Ok(z.reshape(&[c, h, w])?.detach())
    }

    /// Encode a batch of images into `[N, C, H/f, W/f]`.
    pub fn encode_batch(&self, images: &[&Image]) -> Result<Tensor> {
        let latents: Vec<Tensor> = images
            .par_iter()
            .map(|im| self.encode(im))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = latents.iter().collect();
        Ok(zippo_core::tensor::stack_batch(&refs)?)
    }

    /// Decode a `[C, h, w]` latent into an image clamped to [0,1].
    pub fn decode(&self, latent: &Tensor) -> Result<Image> {
        let &[c, h, w] = latent.shape() else {
            return Err(zippo_core::Error::shape(
                "decode",
                format!("expected [C,h,w] latent, got {:?}", latent.shape()),
            )
            .into());
        };
        if c != self.cfg.latent_channels {
            return Err(zippo_core::Error::shape(
                "decode",
                format!("latent has {} channels, codec wants {}", c, self.cfg.latent_channels),
            )
            .into());
        }
        let z = latent.reshape(&[1, c, h, w])?;
        let out = self.decode_tensor(&z)?;
        let &[_, oc, oh, ow] = out.shape() else { unreachable!() };
        Ok(Image::from_tensor_clamped(&out.reshape(&[oc, oh, ow])?)?)
    }

    /// Decode a latent as a matte: decode, average the three channels,
    /// clamp to [0,1].
    pub fn decode_matte(&self, latent: &Tensor) -> Result<AlphaMatte> {
        let image = self.decode(latent)?;
        Ok(AlphaMatte::from_fn(image.width(), image.height(), |x, y| {
            (image.get(0, x, y) + image.get(1, x, y) + image.get(2, x, y)) / 3.0
        }))
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        if let Some(net) = &self.net {
            net.enc_stem.visit(&mut out);
            for (n, c) in &net.enc_blocks {
                n.visit(&mut out);
                c.visit(&mut out);
            }
            net.enc_norm_out.visit(&mut out);
            net.enc_head.visit(&mut out);
            net.dec_in.visit(&mut out);
            for (n, c) in &net.dec_blocks {
                n.visit(&mut out);
                c.visit(&mut out);
            }
            net.dec_norm_out.visit(&mut out);
            net.dec_out.visit(&mut out);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        if let Some(net) = &mut self.net {
            net.enc_stem.visit_mut(&mut out);
            for (n, c) in &mut net.enc_blocks {
                n.visit_mut(&mut out);
                c.visit_mut(&mut out);
            }
            net.enc_norm_out.visit_mut(&mut out);
            net.enc_head.visit_mut(&mut out);
            net.dec_in.visit_mut(&mut out);
            for (n, c) in &mut net.dec_blocks {
                n.visit_mut(&mut out);
                c.visit_mut(&mut out);
            }
            net.dec_norm_out.visit_mut(&mut out);
            net.dec_out.visit_mut(&mut out);
        }
        out
    }

    pub fn meta_section(&self) -> Section {
        Section::new(
            "meta.codec",
            vec![4],
            vec![
                self.cfg.latent_channels as f32,
                self.cfg.downscale as f32,
                self.cfg.base_width as f32,
                match self.cfg.mode {
                    CodecMode::TrainedAutoencoder => 0.0,
                    CodecMode::PixelIdentity => 1.0,
                },
            ],
        )
    }

    pub fn sections(&self) -> Vec<Section> {
        let mut out = vec![self.meta_section()];
        out.extend(sections_of(&self.params()));
        out
    }

    pub fn from_sections(sections: &[Section]) -> Result<Codec> {
        let meta = zippo_core::checkpoint::find(sections, "meta.codec")?;
        if meta.data.len() != 4 {
            return Err(Error::config("meta.codec: expected 4 values"));
        }
        let cfg = CodecConfig {
            latent_channels: meta.data[0] as usize,
            downscale: meta.data[1] as usize,
            base_width: meta.data[2] as usize,
            mode: if meta.data[3] == 0.0 {
                CodecMode::TrainedAutoencoder
            } else {
                CodecMode::PixelIdentity
            },
        };
        let mut codec = Codec::new(cfg, 0)?;
        load_params(codec.params_mut(), sections)?;
        Ok(codec)
    }
}

#[derive(Debug, Clone)]
pub struct CodecTrainReport {
    pub steps: usize,
    pub initial_train_mse: f32,
    pub final_train_mse: f32,
    pub heldout_mse: f32,
    /// (step, loss, lr) per training step.
    pub history: Vec<(usize, f32, f32)>,
}

const CODEC_BATCH: usize = 16;

/// Train the autoencoder on RGB images only. Deterministic given the seed;
/// a 10% tail of the seeded shuffle is held out for the report.
pub fn train_codec(
    dataset: &[Image],
    cfg: &CodecConfig,
    steps: usize,
    lr: f32,
    seed: u64,
) -> Result<(Codec, CodecTrainReport)> {
    if dataset.is_empty() {
        return Err(Error::config("train_codec: empty dataset"));
    }
    if cfg.mode == CodecMode::PixelIdentity {
        return Err(Error::config("train_codec: pixel-identity codec has no parameters"));
    }
    let mut codec = Codec::new(*cfg, seed)?;

    // Seeded split: last 10% (at least 1 when possible) held out.
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = rng::stream(seed, &[0x5B1F]);
    for i in (1..order.len()).rev() {
        order.swap(i, rng::uniform_index(&mut shuffle_rng, i + 1));
    }
    let holdout_len = (dataset.len() / 10).clamp(usize::from(dataset.len() > 1), dataset.len() - 1);
    let (train_idx, holdout_idx) = order.split_at(dataset.len() - holdout_len);

    let batch_tensor = |indices: &[usize]| -> Result<Tensor> {
        let planes: Vec<Tensor> = indices.iter().map(|&i| dataset[i].to_tensor()).collect();
        let refs: Vec<&Tensor> = planes.iter().collect();
        Ok(zippo_core::tensor::stack_batch(&refs)?)
    };

    let eval_mse = |codec: &Codec, indices: &[usize]| -> Result<f32> {
        let mut acc = 0.0f64;
        let mut count = 0usize;
        for chunk in indices.chunks(CODEC_BATCH) {
            let x = batch_tensor(chunk)?;
            let z = codec.encode_tensor(&x)?;
            let y = codec.decode_tensor(&z)?;
            acc += y.mse(&x)?.scalar_value()? as f64 * chunk.len() as f64;
            count += chunk.len();
        }
        Ok((acc / count.max(1) as f64) as f32)
    };

    let probe: Vec<usize> = train_idx.iter().take(64).copied().collect();
    let initial_train_mse = eval_mse(&codec, &probe)?;

    let mut adam = AdamState::new(AdamConfig::default());
    let mut history = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut batch_rng = rng::stream(seed, &[0xBA7C, step as u64]);
        let indices: Vec<usize> = (0..CODEC_BATCH)
            .map(|_| train_idx[rng::uniform_index(&mut batch_rng, train_idx.len())])
            .collect();
        let x = batch_tensor(&indices)?;
        let z = codec.encode_tensor(&x)?;
        let y = codec.decode_tensor(&z)?;
        let loss = y.mse(&x)?;
        let value = loss.scalar_value()?;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                branch: "codec",
                step,
            });
        }
        let grads = zippo_core::backward(&loss)?;
        let step_lr = cosine_lr(step, steps, lr)?;
        adam.step(&mut codec.params_mut(), &grads, step_lr)?;
        history.push((step, value, step_lr));
    }

    let final_train_mse = eval_mse(&codec, &probe)?;
    let heldout_mse = eval_mse(&codec, holdout_idx)?;
    let report = CodecTrainReport {
        steps,
        initial_train_mse,
        final_train_mse,
        heldout_mse,
        history,
    };
    Ok((codec, report))
}
