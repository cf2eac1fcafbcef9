//! Layer building blocks shared by the codec and the denoiser.

use rand_chacha::ChaCha8Rng;
use zippo_core::checkpoint::Section;
use zippo_core::{Parameter, Tensor};

use crate::error::{Error, Result};

pub(crate) const NORM_EPS: f32 = 1e-5;

pub(crate) struct Conv2d {
    pub weight: Parameter,
    pub bias: Parameter,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    /// He-initialized conv layer; `name` becomes the checkpoint prefix.
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Conv2d {
        let std = (2.0 / (c_in * k * k) as f32).sqrt();
        Conv2d {
            weight: Parameter::randn(format!("{name}.weight"), &[c_out, c_in, k, k], std, rng),
            bias: Parameter::zeros(format!("{name}.bias"), &[c_out]),
            stride,
            padding,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.conv2d(self.weight.tensor(), self.bias.tensor(), self.stride, self.padding)?)
    }

    pub fn visit<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }

    pub fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

pub(crate) struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    pub fn new(name: &str, f_in: usize, f_out: usize, rng: &mut ChaCha8Rng) -> Linear {
        let std = (2.0 / f_in as f32).sqrt();
        Linear {
            weight: Parameter::randn(format!("{name}.weight"), &[f_out, f_in], std, rng),
            bias: Parameter::zeros(format!("{name}.bias"), &[f_out]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.linear(self.weight.tensor(), self.bias.tensor())?)
    }

    pub fn visit<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }

    pub fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

pub(crate) struct GroupNorm {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub groups: usize,
}

impl GroupNorm {
    pub fn new(name: &str, channels: usize, groups: usize) -> GroupNorm {
        GroupNorm {
            gamma: Parameter::ones(format!("{name}.gamma"), &[channels]),
            beta: Parameter::zeros(format!("{name}.beta"), &[channels]),
            groups,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.group_norm(self.groups, self.gamma.tensor(), self.beta.tensor(), NORM_EPS)?)
    }

    pub fn visit<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }

    pub fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}

/// Serialize parameters into checkpoint sections.
pub(crate) fn sections_of(params: &[&Parameter]) -> Vec<Section> {
    params
        .iter()
        .map(|p| Section::new(p.name(), p.shape().to_vec(), p.tensor().data().to_vec()))
        .collect()
}

/// Fill parameters from checkpoint sections by exact name.
pub(crate) fn load_params(params: Vec<&mut Parameter>, sections: &[Section]) -> Result<()> {
    for p in params {
        let s = sections
            .iter()
            .find(|s| s.name == p.name())
            .ok_or_else(|| Error::config(format!("checkpoint missing parameter {}", p.name())))?;
        if s.dims != p.shape() {
            return Err(Error::config(format!(
                "checkpoint parameter {} has shape {:?}, expected {:?}",
                p.name(),
                s.dims,
                p.shape()
            )));
        }
        p.set_data(s.data.clone())?;
    }
    Ok(())
}
