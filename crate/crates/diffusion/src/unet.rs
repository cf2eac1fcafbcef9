//! The joint denoiser. Input and output both carry 2C channels: the RGB
//! latent in channels [0, C) and the matte latent in [C, 2C) — a fixed
//! slot order shared with the trainer and samplers. Conditioning (timestep,
//! distribution identifier, class prompt) is summed in one embedding vector
//! and injected per residual block as a channel bias.

use rand_chacha::ChaCha8Rng;
use zippo_core::checkpoint::Section;
use zippo_core::{rng, Parameter, Tensor};

use crate::error::{Error, Result};
use crate::nn::{load_params, sections_of, Conv2d, GroupNorm, Linear};

/// RGB latent occupies channels `[0, C)` of the joint latent; the matte
/// latent occupies `[C, 2C)`.
pub const RGB_SLOT_FIRST: bool = true;

/// Task selector routed into the denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionIdentifier {
    /// Predict a matte from a clean RGB latent.
    R2M,
    /// Generate an RGB latent from a clean matte latent.
    M2R,
    /// Denoise both slots jointly.
    Joint,
}

impl DistributionIdentifier {
    pub fn index(self) -> usize {
        match self {
            DistributionIdentifier::R2M => 0,
            DistributionIdentifier::M2R => 1,
            DistributionIdentifier::Joint => 2,
        }
    }

    pub fn one_hot(self) -> [f32; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            DistributionIdentifier::R2M => "r2m",
            DistributionIdentifier::M2R => "m2r",
            DistributionIdentifier::Joint => "joint",
        }
    }
}

/// Class-prompt index; 0 is the reserved empty prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptId(pub usize);

impl PromptId {
    pub const EMPTY: PromptId = PromptId(0);
}

#[derive(Debug, Clone, Copy)]
pub struct UNetConfig {
    /// Latent channels per slot; the UNet sees 2C in and out.
    pub latent_channels: usize,
    pub base_width: usize,
    pub levels: usize,
    pub embed_dim: usize,
    pub prompt_vocab: usize,
    pub norm_groups: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            latent_channels: 4,
            base_width: 32,
            levels: 3,
            embed_dim: 128,
            prompt_vocab: 8,
            norm_groups: 8,
        }
    }
}

impl UNetConfig {
    fn validate(&self) -> Result<()> {
        if self.embed_dim % 2 != 0 {
            return Err(Error::config(format!(
                "embed_dim {} must be even for sin-cos pairing",
                self.embed_dim
            )));
        }
        if self.levels < 1 {
            return Err(Error::config("levels must be >= 1"));
        }
        if self.base_width % self.norm_groups != 0 {
            return Err(Error::config(format!(
                "base_width {} must be a multiple of norm_groups {}",
                self.base_width, self.norm_groups
            )));
        }
        Ok(())
    }
}

/// Standard sinusoidal position encoding: component `2k` is
/// `sin(index / 10000^(2k/E))`, component `2k+1` the matching cosine.
pub fn sincos_embed(index: usize, dim: usize) -> Result<Vec<f32>> {
    if dim % 2 != 0 {
        return Err(Error::config(format!("sincos_embed: dim {} must be even", dim)));
    }
    let mut out = vec![0.0f32; dim];
    for k in 0..dim / 2 {
        let divisor = 10000f64.powf(2.0 * k as f64 / dim as f64);
        let angle = index as f64 / divisor;
        out[2 * k] = angle.sin() as f32;
        out[2 * k + 1] = angle.cos() as f32;
    }
    Ok(out)
}

struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    fn new(name: &str, dim: usize, rng: &mut ChaCha8Rng) -> Mlp {
        Mlp {
            fc1: Linear::new(&format!("{name}.0"), dim, dim, rng),
            fc2: Linear::new(&format!("{name}.2"), dim, dim, rng),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.silu())
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.fc1.visit(out);
        self.fc2.visit(out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.fc1.visit_mut(out);
        self.fc2.visit_mut(out);
    }
}

struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    emb_proj: Linear,
    norm2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
}

impl ResBlock {
    fn new(name: &str, c_in: usize, c_out: usize, embed_dim: usize, groups: usize, rng: &mut ChaCha8Rng) -> ResBlock {
        ResBlock {
            norm1: GroupNorm::new(&format!("{name}.norm1"), c_in, groups),
            conv1: Conv2d::new(&format!("{name}.conv1"), c_in, c_out, 3, 1, 1, rng),
            emb_proj: Linear::new(&format!("{name}.emb"), embed_dim, c_out, rng),
            norm2: GroupNorm::new(&format!("{name}.norm2"), c_out, groups),
            conv2: Conv2d::new(&format!("{name}.conv2"), c_out, c_out, 3, 1, 1, rng),
            skip: (c_in != c_out)
                .then(|| Conv2d::new(&format!("{name}.skip"), c_in, c_out, 1, 1, 0, rng)),
        }
    }

    fn forward(&self, x: &Tensor, emb: &Tensor) -> Result<Tensor> {
        let mut h = self.conv1.forward(&self.norm1.forward(x)?.silu())?;
        h = h.add_channel_bias(&self.emb_proj.forward(emb)?)?;
        h = self.conv2.forward(&self.norm2.forward(&h)?.silu())?;
        let shortcut = match &self.skip {
            Some(conv) => conv.forward(x)?,
            None => x.clone(),
        };
        Ok(shortcut.add(&h)?)
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.norm1.visit(out);
        self.conv1.visit(out);
        self.emb_proj.visit(out);
        self.norm2.visit(out);
        self.conv2.visit(out);
        if let Some(s) = &self.skip {
            s.visit(out);
        }
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.norm1.visit_mut(out);
        self.conv1.visit_mut(out);
        self.emb_proj.visit_mut(out);
        self.norm2.visit_mut(out);
        self.conv2.visit_mut(out);
        if let Some(s) = &mut self.skip {
            s.visit_mut(out);
        }
    }
}

pub struct UNet {
    cfg: UNetConfig,
    /// Channels in and out; 2C for the joint model, C for the single-slot
    /// variant that [`UNet::inflate_from`] adapts.
    io_channels: usize,
    time_mlp: Mlp,
    ident_mlp: Mlp,
    prompt_table: Parameter,
    conv_in: Conv2d,
    down_res: Vec<ResBlock>,
    down_conv: Vec<Conv2d>,
    mid: ResBlock,
    up_conv: Vec<Conv2d>,
    up_res: Vec<ResBlock>,
    out_norm: GroupNorm,
    conv_out: Conv2d,
}

impl UNet {
    /// Joint-latent denoiser with 2C input/output channels.
    pub fn new(cfg: UNetConfig, seed: u64) -> Result<UNet> {
        Self::with_io(cfg, 2 * cfg.latent_channels, seed)
    }

    /// Single-slot variant (C channels in/out); exists so the channel
    /// inflation procedure has a concrete source model.
    pub fn new_single(cfg: UNetConfig, seed: u64) -> Result<UNet> {
        Self::with_io(cfg, cfg.latent_channels, seed)
    }

    fn with_io(cfg: UNetConfig, io_channels: usize, seed: u64) -> Result<UNet> {
        cfg.validate()?;
        let mut r = rng::stream(seed, &[0x0136]);
        let e = cfg.embed_dim;
        let groups = cfg.norm_groups;
        let widths: Vec<usize> = (0..cfg.levels).map(|i| cfg.base_width << i).collect();

        let time_mlp = Mlp::new("unet.time_mlp", e, &mut r);
        let ident_mlp = Mlp::new("unet.ident_mlp", e, &mut r);
        // Prompt row 0 is the empty prompt: zero-initialized, trainable.
        let mut table = rng::normal_vec(&mut r, cfg.prompt_vocab * e);
        for v in table.iter_mut() {
            *v *= 0.02;
        }
        table[..e].fill(0.0);
        let prompt_table =
            Parameter::from_data("unet.prompt.table", table, &[cfg.prompt_vocab, e])?;

        let conv_in = Conv2d::new("unet.conv_in", io_channels, widths[0], 3, 1, 1, &mut r);
        let mut down_res = Vec::new();
        let mut down_conv = Vec::new();
        for i in 0..cfg.levels {
            down_res.push(ResBlock::new(
                &format!("unet.down{i}.res"),
                widths[i],
                widths[i],
                e,
                groups,
                &mut r,
            ));
            if i + 1 < cfg.levels {
                down_conv.push(Conv2d::new(
                    &format!("unet.down{i}.to{}", i + 1),
                    widths[i],
                    widths[i + 1],
                    3,
                    1,
                    1,
                    &mut r,
                ));
            }
        }
        let top = *widths.last().unwrap();
        let mid = ResBlock::new("unet.mid", top, top, e, groups, &mut r);
        let mut up_conv = Vec::new();
        let mut up_res = Vec::new();
        for i in (0..cfg.levels.saturating_sub(1)).rev() {
            up_conv.push(Conv2d::new(
                &format!("unet.up{i}.from{}", i + 1),
                widths[i + 1],
                widths[i],
                3,
                1,
                1,
                &mut r,
            ));
            // Input is the skip concatenated with the upsampled path.
            up_res.push(ResBlock::new(
                &format!("unet.up{i}.res"),
                2 * widths[i],
                widths[i],
                e,
                groups,
                &mut r,
            ));
        }
        let out_norm = GroupNorm::new("unet.out_norm", widths[0], groups);
        let conv_out = Conv2d::new("unet.conv_out", widths[0], io_channels, 3, 1, 1, &mut r);

        Ok(UNet {
            cfg,
            io_channels,
            time_mlp,
            ident_mlp,
            prompt_table,
            conv_in,
            down_res,
            down_conv,
            mid,
            up_conv,
            up_res,
            out_norm,
            conv_out,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    pub fn io_channels(&self) -> usize {
        self.io_channels
    }

    /// MLP over the sinusoidal timestep encoding, one row per sample.
    pub fn embed_timestep(&self, ts: &[usize]) -> Result<Tensor> {
        if let Some(&bad) = ts.iter().find(|&&t| t < 1) {
            return Err(Error::config(format!("embed_timestep: timestep {} below 1", bad)));
        }
        let e = self.cfg.embed_dim;
        let mut rows = Vec::with_capacity(ts.len() * e);
        for &t in ts {
            rows.extend(sincos_embed(t, e)?);
        }
        let x = Tensor::from_vec(rows, &[ts.len(), e])?;
        self.time_mlp.forward(&x)
    }

    /// MLP over the sinusoidal encoding of the identifier's one-hot index,
    /// replicated to `n` rows. The caller adds this to the timestep
    /// embedding.
    pub fn embed_identifier(&self, d: DistributionIdentifier, n: usize) -> Result<Tensor> {
        let e = self.cfg.embed_dim;
        let row = sincos_embed(d.index(), e)?;
        let mut rows = Vec::with_capacity(n * e);
        for _ in 0..n {
            rows.extend_from_slice(&row);
        }
        let x = Tensor::from_vec(rows, &[n, e])?;
        self.ident_mlp.forward(&x)
    }

    /// Learned prompt-table lookup; row 0 is the empty prompt.
    pub fn embed_prompt(&self, cs: &[PromptId]) -> Result<Tensor> {
        let indices: Vec<usize> = cs.iter().map(|c| c.0).collect();
        Ok(self.prompt_table.tensor().embed_rows(&indices)?)
    }

    fn conditioning(&self, ts: &[usize], cs: &[PromptId], d: DistributionIdentifier) -> Result<Tensor> {
        let emb = self.embed_timestep(ts)?;
        let emb = emb.add(&self.embed_identifier(d, ts.len())?)?;
        Ok(emb.add(&self.embed_prompt(cs)?)?)
    }

    /// Noise prediction over a `[N, 2C, h, w]` joint latent with per-sample
    /// timesteps and prompts and one identifier for the batch. The output
    /// has the input's shape; channels `[0, C)` predict the RGB slot noise
    /// and `[C, 2C)` the matte slot noise.
    pub fn forward(
        &self,
        z: &Tensor,
        ts: &[usize],
        cs: &[PromptId],
        d: DistributionIdentifier,
    ) -> Result<Tensor> {
        let &[n, c, h, w] = z.shape() else {
            return Err(zippo_core::Error::shape(
                "unet_forward",
                format!("expected [N,2C,h,w], got {:?}", z.shape()),
            )
            .into());
        };
        if c != self.io_channels {
            return Err(zippo_core::Error::shape(
                "unet_forward",
                format!("input has {} channels, model wants {}", c, self.io_channels),
            )
            .into());
        }
        if ts.len() != n || cs.len() != n {
            return Err(Error::config(format!(
                "unet_forward: {} timesteps / {} prompts for batch of {}",
                ts.len(),
                cs.len(),
                n
            )));
        }
        let div = 1usize << (self.cfg.levels - 1);
        if h % div != 0 || w % div != 0 {
            return Err(zippo_core::Error::shape(
                "unet_forward",
                format!("spatial dims {}x{} not divisible by {}", h, w, div),
            )
            .into());
        }
        if let Some(bad) = cs.iter().find(|c| c.0 >= self.cfg.prompt_vocab) {
            return Err(Error::config(format!(
                "unet_forward: prompt {} outside vocabulary {}",
                bad.0, self.cfg.prompt_vocab
            )));
        }

        let emb = self.conditioning(ts, cs, d)?;

        let mut hcur = self.conv_in.forward(z)?;
        let mut skips = Vec::new();
        for i in 0..self.cfg.levels {
            hcur = self.down_res[i].forward(&hcur, &emb)?;
            if i + 1 < self.cfg.levels {
                skips.push(hcur.clone());
                hcur = self.down_conv[i].forward(&hcur.avgpool2x()?)?;
            }
        }
        hcur = self.mid.forward(&hcur, &emb)?;
        for (j, skip) in skips.iter().rev().enumerate() {
            hcur = self.up_conv[j].forward(&hcur.upsample_nearest2x()?)?;
            hcur = self.up_res[j].forward(&skip.concat_channels(&hcur)?, &emb)?;
        }
        let out = self.conv_out.forward(&self.out_norm.forward(&hcur)?.silu())?;
        debug_assert_eq!(out.shape(), z.shape());
        Ok(out)
    }

    /// Single-sample convenience over a `[2C, h, w]` latent.
    pub fn forward_one(
        &self,
        z: &Tensor,
        t: usize,
        c: PromptId,
        d: DistributionIdentifier,
    ) -> Result<Tensor> {
        let &[ch, h, w] = z.shape() else {
            return Err(zippo_core::Error::shape(
                "unet_forward",
                format!("expected [2C,h,w], got {:?}", z.shape()),
            )
            .into());
        };
        let out = self.forward(&z.reshape(&[1, ch, h, w])?, &[t], &[c], d)?;
        Ok(out.reshape(&[ch, h, w])?)
    }

    /// Adapt a single-slot model to the joint layout: input-channel weights
    /// of the first conv are duplicated at half scale (so a duplicated
    /// input reproduces the original activations), and the final conv's
    /// output channels are duplicated verbatim for the two slots.
    pub fn inflate_from(single: &UNet) -> Result<UNet> {
        let cfg = single.cfg;
        if single.io_channels != cfg.latent_channels {
            return Err(Error::config(
                "inflate_from: source model must be the single-slot variant",
            ));
        }
        let mut joint = UNet::new(cfg, 0)?;
        // Copy everything that has matching shapes.
        {
            let src = single.params();
            let mut by_name: std::collections::HashMap<&str, &Parameter> = Default::default();
            for p in &src {
                by_name.insert(p.name(), p);
            }
            for p in joint.params_mut() {
                let s = by_name[p.name()];
                if s.shape() == p.shape() {
                    p.set_data(s.tensor().data().to_vec())?;
                }
            }
        }
        let c = cfg.latent_channels;
        let w0 = cfg.base_width;

        // conv_in: [W, C, 3, 3] -> [W, 2C, 3, 3], each copy scaled by 0.5.
        let src_w = single.conv_in.weight.tensor().data();
        let mut inflated = vec![0.0f32; w0 * 2 * c * 9];
        for oc in 0..w0 {
            for ic in 0..c {
                for j in 0..9 {
                    let v = 0.5 * src_w[(oc * c + ic) * 9 + j];
                    inflated[(oc * 2 * c + ic) * 9 + j] = v;
                    inflated[(oc * 2 * c + c + ic) * 9 + j] = v;
                }
            }
        }
        joint.conv_in.weight.set_data(inflated)?;
        joint
            .conv_in
            .bias
            .set_data(single.conv_in.bias.tensor().data().to_vec())?;

        // conv_out: [C, W, 3, 3] -> [2C, W, 3, 3], rows copied; bias dup.
        let src_w = single.conv_out.weight.tensor().data();
        let mut doubled = Vec::with_capacity(2 * src_w.len());
        doubled.extend_from_slice(src_w);
        doubled.extend_from_slice(src_w);
        joint.conv_out.weight.set_data(doubled)?;
        let src_b = single.conv_out.bias.tensor().data();
        let mut bias = Vec::with_capacity(2 * src_b.len());
        bias.extend_from_slice(src_b);
        bias.extend_from_slice(src_b);
        joint.conv_out.bias.set_data(bias)?;
        Ok(joint)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        self.time_mlp.visit(&mut out);
        self.ident_mlp.visit(&mut out);
        out.push(&self.prompt_table);
        self.conv_in.visit(&mut out);
        for r in &self.down_res {
            r.visit(&mut out);
        }
        for c in &self.down_conv {
            c.visit(&mut out);
        }
        self.mid.visit(&mut out);
        for c in &self.up_conv {
            c.visit(&mut out);
        }
        for r in &self.up_res {
            r.visit(&mut out);
        }
        self.out_norm.visit(&mut out);
        self.conv_out.visit(&mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        self.time_mlp.visit_mut(&mut out);
        self.ident_mlp.visit_mut(&mut out);
        out.push(&mut self.prompt_table);
        self.conv_in.visit_mut(&mut out);
        for r in &mut self.down_res {
            r.visit_mut(&mut out);
        }
        for c in &mut self.down_conv {
            c.visit_mut(&mut out);
        }
        self.mid.visit_mut(&mut out);
        for c in &mut self.up_conv {
            c.visit_mut(&mut out);
        }
        for r in &mut self.up_res {
            r.visit_mut(&mut out);
        }
        self.out_norm.visit_mut(&mut out);
        self.conv_out.visit_mut(&mut out);
        out
    }

    pub fn meta_section(&self) -> Section {
        Section::new(
            "meta.unet",
            vec![7],
            vec![
                self.cfg.latent_channels as f32,
                self.cfg.base_width as f32,
                self.cfg.levels as f32,
                self.cfg.embed_dim as f32,
                self.cfg.prompt_vocab as f32,
                self.cfg.norm_groups as f32,
                self.io_channels as f32,
            ],
        )
    }

    pub fn sections(&self) -> Vec<Section> {
        let mut out = vec![self.meta_section()];
        out.extend(sections_of(&self.params()));
        out
    }

    pub fn from_sections(sections: &[Section]) -> Result<UNet> {
        let meta = zippo_core::checkpoint::find(sections, "meta.unet")?;
        if meta.data.len() != 7 {
            return Err(Error::config("meta.unet: expected 7 values"));
        }
        let cfg = UNetConfig {
            latent_channels: meta.data[0] as usize,
            base_width: meta.data[1] as usize,
            levels: meta.data[2] as usize,
            embed_dim: meta.data[3] as usize,
            prompt_vocab: meta.data[4] as usize,
            norm_groups: meta.data[5] as usize,
        };
        let mut unet = UNet::with_io(cfg, meta.data[6] as usize, 0)?;
        load_params(unet.params_mut(), sections)?;
        Ok(unet)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> UNetConfig {
        UNetConfig {
            latent_channels: 2,
            base_width: 8,
            levels: 2,
            embed_dim: 16,
            prompt_vocab: 4,
            norm_groups: 4,
        }
    }

    fn test_latent(cfg: &UNetConfig, seed: u64) -> Tensor {
        rng::normal_tensor(
            &mut rng::stream(seed, &[0x11]),
            &[2 * cfg.latent_channels, 4, 4],
        )
    }

    #[test]
    fn sincos_basics() {
        // index 0 alternates sin(0)=0, cos(0)=1
        let v = sincos_embed(0, 8).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        // all components bounded
        let v = sincos_embed(917, 32).unwrap();
        assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
        // small indices pairwise distinct
        let a = sincos_embed(0, 8).unwrap();
        let b = sincos_embed(1, 8).unwrap();
        let c = sincos_embed(2, 8).unwrap();
        assert_ne!(a, b);
        assert_ne!(b, c);
        assert_ne!(a, c);
        // odd dims rejected
        assert!(sincos_embed(1, 7).is_err());
    }

    #[test]
    fn timestep_embedding_contracts() {
        let unet = UNet::new(small_cfg(), 3).unwrap();
        let a = unet.embed_timestep(&[5]).unwrap();
        let b = unet.embed_timestep(&[5]).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(a.shape(), &[1, 16]);
        let far = unet.embed_timestep(&[200]).unwrap();
        assert_ne!(a.data(), far.data());
        assert!(unet.embed_timestep(&[0]).is_err());
    }

    #[test]
    fn identifier_embeddings_pairwise_distinct() {
        let unet = UNet::new(small_cfg(), 4).unwrap();
        let r2m = unet.embed_identifier(DistributionIdentifier::R2M, 1).unwrap();
        let m2r = unet.embed_identifier(DistributionIdentifier::M2R, 1).unwrap();
        let joint = unet.embed_identifier(DistributionIdentifier::Joint, 1).unwrap();
        assert_eq!(r2m.shape(), &[1, 16]);
        assert_ne!(r2m.data(), m2r.data());
        assert_ne!(m2r.data(), joint.data());
        assert_ne!(r2m.data(), joint.data());
        // deterministic
        let again = unet.embed_identifier(DistributionIdentifier::R2M, 1).unwrap();
        assert_eq!(r2m.data(), again.data());
    }

    #[test]
    fn one_hot_layout() {
        assert_eq!(DistributionIdentifier::R2M.one_hot(), [1.0, 0.0, 0.0]);
        assert_eq!(DistributionIdentifier::M2R.one_hot(), [0.0, 1.0, 0.0]);
        assert_eq!(DistributionIdentifier::Joint.one_hot(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_prompt_starts_at_zero() {
        let unet = UNet::new(small_cfg(), 5).unwrap();
        let empty = unet.embed_prompt(&[PromptId::EMPTY]).unwrap();
        assert!(empty.data().iter().all(|&v| v == 0.0));
        let c1 = unet.embed_prompt(&[PromptId(1)]).unwrap();
        assert!(c1.data().iter().any(|&v| v != 0.0));
        let again = unet.embed_prompt(&[PromptId(1)]).unwrap();
        assert_eq!(c1.data(), again.data());
        assert!(unet.embed_prompt(&[PromptId(4)]).is_err());
    }

    #[test]
    fn forward_shape_and_determinism() {
        let cfg = small_cfg();
        let unet = UNet::new(cfg, 6).unwrap();
        let z = test_latent(&cfg, 1);
        let a = unet
            .forward_one(&z, 3, PromptId(1), DistributionIdentifier::Joint)
            .unwrap();
        assert_eq!(a.shape(), z.shape());
        let b = unet
            .forward_one(&z, 3, PromptId(1), DistributionIdentifier::Joint)
            .unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn identifier_routing_changes_output() {
        let cfg = small_cfg();
        let unet = UNet::new(cfg, 7).unwrap();
        let z = test_latent(&cfg, 2);
        let r2m = unet
            .forward_one(&z, 3, PromptId(1), DistributionIdentifier::R2M)
            .unwrap();
        let m2r = unet
            .forward_one(&z, 3, PromptId(1), DistributionIdentifier::M2R)
            .unwrap();
        let max_diff = r2m
            .data()
            .iter()
            .zip(m2r.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff > 0.0);
    }

    #[test]
    fn forward_validates_inputs() {
        let cfg = small_cfg();
        let unet = UNet::new(cfg, 8).unwrap();
        // wrong channel count
        let bad = rng::normal_tensor(&mut rng::stream(1, &[2]), &[3, 4, 4]);
        assert!(unet
            .forward_one(&bad, 3, PromptId(0), DistributionIdentifier::R2M)
            .is_err());
        // spatial dims not divisible by 2^(levels-1)
        let odd = rng::normal_tensor(&mut rng::stream(1, &[3]), &[4, 5, 5]);
        assert!(unet
            .forward_one(&odd, 3, PromptId(0), DistributionIdentifier::R2M)
            .is_err());
        // out-of-vocab prompt
        let z = test_latent(&cfg, 3);
        assert!(unet
            .forward_one(&z, 3, PromptId(9), DistributionIdentifier::R2M)
            .is_err());
    }

    #[test]
    fn inflation_reproduces_single_model_on_duplicated_input() {
        let cfg = small_cfg();
        let single = UNet::new_single(cfg, 9).unwrap();
        let joint = UNet::inflate_from(&single).unwrap();
        assert_eq!(joint.io_channels(), 2 * cfg.latent_channels);

        let z = rng::normal_tensor(&mut rng::stream(4, &[0x22]), &[cfg.latent_channels, 4, 4]);
        let single_out = single
            .forward_one(&z, 3, PromptId(1), DistributionIdentifier::R2M)
            .unwrap();
        let dup = z.concat_channels(&z).unwrap();
        let joint_out = joint
            .forward_one(&dup, 3, PromptId(1), DistributionIdentifier::R2M)
            .unwrap();
        let (first, second) = joint_out.split_channels(cfg.latent_channels).unwrap();
        for (a, b) in first.data().iter().zip(single_out.data()) {
            assert!((a - b).abs() < 1e-4, "{} vs {}", a, b);
        }
        for (a, b) in second.data().iter().zip(single_out.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = small_cfg();
        let unet = UNet::new(cfg, 10).unwrap();
        let sections = unet.sections();
        let loaded = UNet::from_sections(&sections).unwrap();
        let z = test_latent(&cfg, 5);
        let a = unet
            .forward_one(&z, 2, PromptId(1), DistributionIdentifier::M2R)
            .unwrap();
        let b = loaded
            .forward_one(&z, 2, PromptId(1), DistributionIdentifier::M2R)
            .unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn parameter_names_unique() {
        let unet = UNet::new(UNetConfig::default(), 11).unwrap();
        let params = unet.params();
        let mut names: Vec<&str> = params.iter().map(|p| p.name()).collect();
        let before = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(before, names.len());
        assert!(names.iter().all(|n| n.starts_with("unet.")));
    }
}
