//! Forward operations. Each op validates shapes, runs its kernel, and
//! records the graph node unless no input requires gradients.

use rayon::prelude::*;

use super::kernels;
use super::{Op, Tensor};
use crate::error::{Error, Result};

fn node(shape: Vec<usize>, data: Vec<f32>, op: Op, requires: bool) -> Tensor {
    if requires {
        Tensor::from_parts(shape, data, op, true)
    } else {
        Tensor::from_parts(shape, data, Op::Leaf, false)
    }
}

pub(crate) fn conv_out_dim(h: usize, pad: usize, k: usize, stride: usize) -> usize {
    (h + 2 * pad - k) / stride + 1
}

impl Tensor {
    /// 2D convolution, NCHW input against OIKK weights.
    pub fn conv2d(
        &self,
        weight: &Tensor,
        bias: &Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor> {
        let (n, c_in, h, w) = self.dims4("conv2d")?;
        let (o, wi, kh, kw) = weight.dims4("conv2d")?;
        if wi != c_in {
            return Err(Error::shape(
                "conv2d",
                format!("input has {} channels but weight expects {}", c_in, wi),
            ));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be square and odd, got {}x{}", kh, kw),
            ));
        }
        if bias.shape() != [o] {
            return Err(Error::shape(
                "conv2d",
                format!("bias shape {:?} does not match {} output channels", bias.shape(), o),
            ));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d: stride must be >= 1"));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "spatial dims {}x{} with padding {} smaller than kernel {}",
                    h, w, padding, kh
                ),
            ));
        }
        let oh = conv_out_dim(h, padding, kh, stride);
        let ow = conv_out_dim(w, padding, kw, stride);
        let k_dim = c_in * kh * kw;
        let ohw = oh * ow;

        let mut out = vec![0.0f32; n * o * ohw];
        let input = self.data();
        let wdata = weight.data();
        let bdata = bias.data();
        out.par_chunks_mut(o * ohw)
            .enumerate()
            .for_each(|(ni, out_n)| {
                let sample = &input[ni * c_in * h * w..(ni + 1) * c_in * h * w];
                let mut cols = vec![0.0f32; k_dim * ohw];
                kernels::im2col(sample, c_in, h, w, kh, stride, padding, oh, ow, &mut cols);
                kernels::matmul_acc(out_n, wdata, &cols, o, k_dim, ohw);
                for (oc, b) in bdata.iter().enumerate() {
                    for v in &mut out_n[oc * ohw..(oc + 1) * ohw] {
                        *v += b;
                    }
                }
            });

        let requires = self.requires_grad() || weight.requires_grad() || bias.requires_grad();
        Ok(node(
            vec![n, o, oh, ow],
            out,
            Op::Conv2d {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.clone(),
                stride,
                padding,
            },
            requires,
        ))
    }

    /// `out = input · weightᵀ + bias`; input `[N,F]`, weight `[G,F]`, bias `[G]`.
    pub fn linear(&self, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (n, f) = self.dims2("linear")?;
        let (g, f2) = weight.dims2("linear")?;
        if f != f2 {
            return Err(Error::shape(
                "linear",
                format!("input features {} vs weight features {}", f, f2),
            ));
        }
        if bias.shape() != [g] {
            return Err(Error::shape(
                "linear",
                format!("bias shape {:?} does not match {} outputs", bias.shape(), g),
            ));
        }
        let mut out = vec![0.0f32; n * g];
        kernels::matmul_abt(&mut out, self.data(), weight.data(), n, g, f);
        for row in out.chunks_mut(g) {
            for (v, b) in row.iter_mut().zip(bias.data()) {
                *v += b;
            }
        }
        let requires = self.requires_grad() || weight.requires_grad() || bias.requires_grad();
        Ok(node(
            vec![n, g],
            out,
            Op::Linear {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.clone(),
            },
            requires,
        ))
    }

    /// Group normalization over NCHW with per-channel affine.
    pub fn group_norm(
        &self,
        groups: usize,
        gamma: &Tensor,
        beta: &Tensor,
        eps: f32,
    ) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("group_norm")?;
        if groups == 0 || c % groups != 0 {
            return Err(Error::shape(
                "group_norm",
                format!("{} channels not divisible by {} groups", c, groups),
            ));
        }
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::shape(
                "group_norm",
                format!(
                    "affine params must have shape [{}], got gamma {:?} beta {:?}",
                    c,
                    gamma.shape(),
                    beta.shape()
                ),
            ));
        }
        let group_size = c / groups;
        let m = group_size * h * w;
        let mut out = vec![0.0f32; n * c * h * w];
        let mut means = vec![0.0f32; n * groups];
        let mut inv_stds = vec![0.0f32; n * groups];
        let input = self.data();
        let gdata = gamma.data();
        let bdata = beta.data();
        for ni in 0..n {
            for gi in 0..groups {
                let start = (ni * c + gi * group_size) * h * w;
                let slice = &input[start..start + m];
                let mut sum = 0.0f64;
                let mut sq = 0.0f64;
                for &v in slice {
                    sum += v as f64;
                    sq += (v as f64) * (v as f64);
                }
                let mean = sum / m as f64;
                let var = (sq / m as f64 - mean * mean).max(0.0);
                let inv_std = 1.0 / (var + eps as f64).sqrt();
                means[ni * groups + gi] = mean as f32;
                inv_stds[ni * groups + gi] = inv_std as f32;
                for ci in 0..group_size {
                    let ch = gi * group_size + ci;
                    let off = (ni * c + ch) * h * w;
                    let (g, b) = (gdata[ch], bdata[ch]);
                    for j in 0..h * w {
                        let xhat = (input[off + j] - mean as f32) * inv_std as f32;
                        out[off + j] = g * xhat + b;
                    }
                }
            }
        }
        let requires = self.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        Ok(node(
            vec![n, c, h, w],
            out,
            Op::GroupNorm {
                input: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                groups,
                mean: means,
                inv_std: inv_stds,
            },
            requires,
        ))
    }

    pub fn silu(&self) -> Tensor {
        let out: Vec<f32> = self
            .data()
            .iter()
            .map(|&x| {
                let s = 1.0 / (1.0 + (-x).exp());
                x * s
            })
            .collect();
        node(
            self.shape().to_vec(),
            out,
            Op::Silu { input: self.clone() },
            self.requires_grad(),
        )
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "add",
                format!("shapes {:?} and {:?} differ", self.shape(), other.shape()),
            ));
        }
        let out: Vec<f32> = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a + b)
            .collect();
        Ok(node(
            self.shape().to_vec(),
            out,
            Op::Add {
                lhs: self.clone(),
                rhs: other.clone(),
            },
            self.requires_grad() || other.requires_grad(),
        ))
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        let out: Vec<f32> = self.data().iter().map(|&x| x * factor).collect();
        node(
            self.shape().to_vec(),
            out,
            Op::Scale {
                input: self.clone(),
                factor,
            },
            self.requires_grad(),
        )
    }

    /// Mean squared error over all elements; returns a rank-0 scalar.
    pub fn mse(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "mse",
                format!("shapes {:?} and {:?} differ", self.shape(), other.shape()),
            ));
        }
        let mut acc = 0.0f64;
        for (a, b) in self.data().iter().zip(other.data()) {
            let d = (a - b) as f64;
            acc += d * d;
        }
        let value = (acc / self.numel() as f64) as f32;
        Ok(node(
            vec![],
            vec![value],
            Op::Mse {
                lhs: self.clone(),
                rhs: other.clone(),
            },
            self.requires_grad() || other.requires_grad(),
        ))
    }

    /// Broadcast-add a `[N,C]` bias over the spatial dims of `[N,C,H,W]`.
    pub fn add_channel_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("add_channel_bias")?;
        let (bn, bc) = bias.dims2("add_channel_bias")?;
        if bn != n || bc != c {
            return Err(Error::shape(
                "add_channel_bias",
                format!("bias [{},{}] does not match input [{},{},..]", bn, bc, n, c),
            ));
        }
        let mut out = self.data().to_vec();
        let bdata = bias.data();
        for ni in 0..n {
            for ci in 0..c {
                let b = bdata[ni * c + ci];
                let off = (ni * c + ci) * h * w;
                for v in &mut out[off..off + h * w] {
                    *v += b;
                }
            }
        }
        Ok(node(
            self.shape().to_vec(),
            out,
            Op::AddChannelBias {
                input: self.clone(),
                bias: bias.clone(),
            },
            self.requires_grad() || bias.requires_grad(),
        ))
    }

    /// Gather rows of an embedding table `[V,E]` -> `[indices.len(), E]`.
    pub fn embed_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (v, e) = self.dims2("embed_rows")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(Error::invalid(format!(
                "embed_rows: index {} out of vocabulary {}",
                bad, v
            )));
        }
        let mut out = Vec::with_capacity(indices.len() * e);
        for &i in indices {
            out.extend_from_slice(&self.data()[i * e..(i + 1) * e]);
        }
        Ok(node(
            vec![indices.len(), e],
            out,
            Op::Embed {
                table: self.clone(),
                indices: indices.to_vec(),
            },
            self.requires_grad(),
        ))
    }

    /// Nearest-neighbour 2x spatial upsampling.
    pub fn upsample_nearest2x(&self) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("upsample_nearest2x")?;
        let mut out = vec![0.0f32; n * c * 4 * h * w];
        let input = self.data();
        for plane in 0..n * c {
            let src = &input[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * 4 * h * w..(plane + 1) * 4 * h * w];
            let w2 = 2 * w;
            for y in 0..h {
                for x in 0..w {
                    let v = src[y * w + x];
                    let base = 2 * y * w2 + 2 * x;
                    dst[base] = v;
                    dst[base + 1] = v;
                    dst[base + w2] = v;
                    dst[base + w2 + 1] = v;
                }
            }
        }
        Ok(node(
            vec![n, c, 2 * h, 2 * w],
            out,
            Op::Upsample2x { input: self.clone() },
            self.requires_grad(),
        ))
    }

    /// 2x2 average pooling; spatial dims must be even.
    pub fn avgpool2x(&self) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("avgpool2x")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(
                "avgpool2x",
                format!("spatial dims {}x{} must be even", h, w),
            ));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![0.0f32; n * c * oh * ow];
        let input = self.data();
        for plane in 0..n * c {
            let src = &input[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    let base = 2 * y * w + 2 * x;
                    dst[y * ow + x] =
                        0.25 * (src[base] + src[base + 1] + src[base + w] + src[base + w + 1]);
                }
            }
        }
        Ok(node(
            vec![n, c, oh, ow],
            out,
            Op::AvgPool2x { input: self.clone() },
            self.requires_grad(),
        ))
    }

    /// View with a new shape; element count must be preserved.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape(), shape),
            ));
        }
        Ok(node(
            shape.to_vec(),
            self.data().to_vec(),
            Op::Reshape { input: self.clone() },
            self.requires_grad(),
        ))
    }
}

/// Stack same-shaped tensors along a new leading axis. Data-only: the
/// result is a leaf (used for batching inputs, never differentiated).
pub fn stack_batch(items: &[&Tensor]) -> Result<Tensor> {
    let first = items
        .first()
        .ok_or_else(|| Error::invalid("stack_batch: empty input"))?;
    let mut data = Vec::with_capacity(items.len() * first.numel());
    for t in items {
        if t.shape() != first.shape() {
            return Err(Error::shape(
                "stack_batch",
                format!("shapes {:?} and {:?} differ", t.shape(), first.shape()),
            ));
        }
        data.extend_from_slice(t.data());
    }
    let mut shape = vec![items.len()];
    shape.extend_from_slice(first.shape());
    Tensor::from_vec(data, &shape)
}
