//! Reverse-mode differentiation over the recorded graph.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use super::kernels;
use super::ops::conv_out_dim;
use super::structural::channel_view;
use super::{Op, Tensor};
use crate::error::{Error, Result};

/// Gradient store produced by [`backward`], keyed by tensor identity.
pub struct Gradients {
    grads: HashMap<u64, Vec<f32>>,
}

impl Gradients {
    pub fn get(&self, tensor: &Tensor) -> Option<&[f32]> {
        self.grads.get(&tensor.id()).map(|v| v.as_slice())
    }

    pub fn contains(&self, tensor: &Tensor) -> bool {
        self.grads.contains_key(&tensor.id())
    }

    fn accumulate(&mut self, target: &Tensor, contribution: &[f32]) {
        if !target.requires_grad() {
            return;
        }
        let entry = self
            .grads
            .entry(target.id())
            .or_insert_with(|| vec![0.0; target.numel()]);
        for (g, c) in entry.iter_mut().zip(contribution) {
            *g += c;
        }
    }
}

fn parents(op: &Op) -> Vec<&Tensor> {
    match op {
        Op::Leaf => vec![],
        Op::Conv2d { input, weight, bias, .. } => vec![input, weight, bias],
        Op::Linear { input, weight, bias } => vec![input, weight, bias],
        Op::GroupNorm { input, gamma, beta, .. } => vec![input, gamma, beta],
        Op::Silu { input }
        | Op::Scale { input, .. }
        | Op::SliceChannels { input, .. }
        | Op::Upsample2x { input }
        | Op::AvgPool2x { input }
        | Op::Reshape { input } => vec![input],
        Op::Add { lhs, rhs } | Op::ConcatChannels { lhs, rhs } | Op::Mse { lhs, rhs } => {
            vec![lhs, rhs]
        }
        Op::AddChannelBias { input, bias } => vec![input, bias],
        Op::Embed { table, .. } => vec![table],
    }
}

/// Post-order DFS yielding a topological order of the reachable subgraph
/// that requires gradients.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    // (tensor, children_pushed)
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) || !t.requires_grad() {
            continue;
        }
        stack.push((t.clone(), true));
        for p in parents(t.op()) {
            if p.requires_grad() && !visited.contains(&p.id()) {
                stack.push((p.clone(), false));
            }
        }
    }
    order
}

/// Backpropagate from a scalar loss. Returns gradients for every tensor
/// in the graph that requires them; leaves not reachable from the loss
/// (detached or constant) receive none.
pub fn backward(loss: &Tensor) -> Result<Gradients> {
    if loss.numel() != 1 {
        return Err(Error::shape(
            "backward",
            format!("loss must be scalar, got shape {:?}", loss.shape()),
        ));
    }
    let mut grads = Gradients {
        grads: HashMap::new(),
    };
    if !loss.requires_grad() {
        return Ok(grads);
    }
    grads.grads.insert(loss.id(), vec![1.0]);

    let order = topo_order(loss);
    for t in order.iter().rev() {
        let Some(grad_out) = grads.grads.get(&t.id()).cloned() else {
            continue;
        };
        step_backward(t, &grad_out, &mut grads)?;
    }
    Ok(grads)
}

fn step_backward(t: &Tensor, grad_out: &[f32], grads: &mut Gradients) -> Result<()> {
    match t.op() {
        Op::Leaf => {}
        Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            padding,
        } => conv2d_backward(t, input, weight, bias, *stride, *padding, grad_out, grads),
        Op::Linear { input, weight, bias } => {
            let (n, f) = input.dims2("linear_backward")?;
            let (g, _) = weight.dims2("linear_backward")?;
            if input.requires_grad() {
                let mut gin = vec![0.0f32; n * f];
                kernels::matmul_acc(&mut gin, grad_out, weight.data(), n, g, f);
                grads.accumulate(input, &gin);
            }
            if weight.requires_grad() {
                let mut gw = vec![0.0f32; g * f];
                kernels::matmul_atb(&mut gw, grad_out, input.data(), n, g, f);
                grads.accumulate(weight, &gw);
            }
            if bias.requires_grad() {
                let mut gb = vec![0.0f32; g];
                for row in grad_out.chunks(g) {
                    for (b, v) in gb.iter_mut().zip(row) {
                        *b += v;
                    }
                }
                grads.accumulate(bias, &gb);
            }
        }
        Op::GroupNorm {
            input,
            gamma,
            beta,
            groups,
            mean,
            inv_std,
            ..
        } => group_norm_backward(input, gamma, beta, *groups, mean, inv_std, grad_out, grads)?,
        Op::Silu { input } => {
            if input.requires_grad() {
                let gin: Vec<f32> = input
                    .data()
                    .iter()
                    .zip(grad_out)
                    .map(|(&x, &g)| {
                        let s = 1.0 / (1.0 + (-x).exp());
                        g * s * (1.0 + x * (1.0 - s))
                    })
                    .collect();
                grads.accumulate(input, &gin);
            }
        }
        Op::Add { lhs, rhs } => {
            grads.accumulate(lhs, grad_out);
            grads.accumulate(rhs, grad_out);
        }
        Op::Scale { input, factor } => {
            if input.requires_grad() {
                let gin: Vec<f32> = grad_out.iter().map(|g| g * factor).collect();
                grads.accumulate(input, &gin);
            }
        }
        Op::ConcatChannels { lhs, rhs } => {
            let (outer, ca, inner) = channel_view(lhs, "concat_backward")?;
            let (_, cb, _) = channel_view(rhs, "concat_backward")?;
            if lhs.requires_grad() {
                let mut gl = vec![0.0f32; lhs.numel()];
                for i in 0..outer {
                    let src = i * (ca + cb) * inner;
                    gl[i * ca * inner..(i + 1) * ca * inner]
                        .copy_from_slice(&grad_out[src..src + ca * inner]);
                }
                grads.accumulate(lhs, &gl);
            }
            if rhs.requires_grad() {
                let mut gr = vec![0.0f32; rhs.numel()];
                for i in 0..outer {
                    let src = i * (ca + cb) * inner + ca * inner;
                    gr[i * cb * inner..(i + 1) * cb * inner]
                        .copy_from_slice(&grad_out[src..src + cb * inner]);
                }
                grads.accumulate(rhs, &gr);
            }
        }
        Op::SliceChannels { input, from, to } => {
            if input.requires_grad() {
                let (outer, c, inner) = channel_view(input, "slice_backward")?;
                let width = to - from;
                let mut gin = vec![0.0f32; input.numel()];
                for i in 0..outer {
                    let dst = i * c * inner + from * inner;
                    gin[dst..dst + width * inner]
                        .copy_from_slice(&grad_out[i * width * inner..(i + 1) * width * inner]);
                }
                grads.accumulate(input, &gin);
            }
        }
        Op::Upsample2x { input } => {
            if input.requires_grad() {
                let (n, c, h, w) = input.dims4("upsample_backward")?;
                let mut gin = vec![0.0f32; input.numel()];
                let w2 = 2 * w;
                for plane in 0..n * c {
                    let src = &grad_out[plane * 4 * h * w..(plane + 1) * 4 * h * w];
                    let dst = &mut gin[plane * h * w..(plane + 1) * h * w];
                    for y in 0..h {
                        for x in 0..w {
                            let base = 2 * y * w2 + 2 * x;
                            dst[y * w + x] =
                                src[base] + src[base + 1] + src[base + w2] + src[base + w2 + 1];
                        }
                    }
                }
                grads.accumulate(input, &gin);
            }
        }
        Op::AvgPool2x { input } => {
            if input.requires_grad() {
                let (n, c, h, w) = input.dims4("avgpool_backward")?;
                let (oh, ow) = (h / 2, w / 2);
                let mut gin = vec![0.0f32; input.numel()];
                for plane in 0..n * c {
                    let src = &grad_out[plane * oh * ow..(plane + 1) * oh * ow];
                    let dst = &mut gin[plane * h * w..(plane + 1) * h * w];
                    for y in 0..oh {
                        for x in 0..ow {
                            let g = 0.25 * src[y * ow + x];
                            let base = 2 * y * w + 2 * x;
                            dst[base] = g;
                            dst[base + 1] = g;
                            dst[base + w] = g;
                            dst[base + w + 1] = g;
                        }
                    }
                }
                grads.accumulate(input, &gin);
            }
        }
        Op::Mse { lhs, rhs } => {
            let g = grad_out[0];
            let scale = 2.0 * g / lhs.numel() as f32;
            if lhs.requires_grad() {
                let gl: Vec<f32> = lhs
                    .data()
                    .iter()
                    .zip(rhs.data())
                    .map(|(a, b)| scale * (a - b))
                    .collect();
                grads.accumulate(lhs, &gl);
            }
            if rhs.requires_grad() {
                let gr: Vec<f32> = lhs
                    .data()
                    .iter()
                    .zip(rhs.data())
                    .map(|(a, b)| -scale * (a - b))
                    .collect();
                grads.accumulate(rhs, &gr);
            }
        }
        Op::AddChannelBias { input, bias } => {
            grads.accumulate(input, grad_out);
            if bias.requires_grad() {
                let (n, c, h, w) = input.dims4("chan_bias_backward")?;
                let mut gb = vec![0.0f32; n * c];
                for (plane, slot) in gb.iter_mut().enumerate() {
                    *slot = grad_out[plane * h * w..(plane + 1) * h * w].iter().sum();
                }
                grads.accumulate(bias, &gb);
            }
        }
        Op::Embed { table, indices } => {
            if table.requires_grad() {
                let (_, e) = table.dims2("embed_backward")?;
                let mut gt = vec![0.0f32; table.numel()];
                for (row, &idx) in indices.iter().enumerate() {
                    let src = &grad_out[row * e..(row + 1) * e];
                    for (g, v) in gt[idx * e..(idx + 1) * e].iter_mut().zip(src) {
                        *g += v;
                    }
                }
                grads.accumulate(table, &gt);
            }
        }
        Op::Reshape { input } => {
            grads.accumulate(input, grad_out);
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    out: &Tensor,
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &[f32],
    grads: &mut Gradients,
) {
    let _ = out;
    let &[n, c_in, h, w] = input.shape() else { unreachable!() };
    let &[o, _, k, _] = weight.shape() else { unreachable!() };
    let oh = conv_out_dim(h, padding, k, stride);
    let ow = conv_out_dim(w, padding, k, stride);
    let ohw = oh * ow;
    let k_dim = c_in * k * k;
    let need_input = input.requires_grad();
    let need_weight = weight.requires_grad();

    let input_data = input.data();
    let weight_data = weight.data();

    let mut gin = vec![0.0f32; if need_input { n * c_in * h * w } else { 0 }];
    // Chunk the input-gradient buffer per sample so parallel writers are
    // disjoint; per-sample weight grads are reduced in index order.
    let per_sample: Vec<Vec<f32>> = if need_input {
        gin.par_chunks_mut(c_in * h * w)
            .enumerate()
            .map(|(ni, gin_n)| {
                conv2d_backward_sample(
                    ni,
                    input_data,
                    weight_data,
                    grad_out,
                    Some(gin_n),
                    (n, c_in, h, w, o, k, stride, padding, oh, ow),
                    need_weight,
                )
            })
            .collect()
    } else {
        (0..n)
            .into_par_iter()
            .map(|ni| {
                conv2d_backward_sample(
                    ni,
                    input_data,
                    weight_data,
                    grad_out,
                    None,
                    (n, c_in, h, w, o, k, stride, padding, oh, ow),
                    need_weight,
                )
            })
            .collect()
    };

    if need_input {
        grads.accumulate(input, &gin);
    }
    if need_weight {
        let mut gw = vec![0.0f32; o * k_dim];
        for gw_n in &per_sample {
            for (a, b) in gw.iter_mut().zip(gw_n) {
                *a += b;
            }
        }
        grads.accumulate(weight, &gw);
    }
    if bias.requires_grad() {
        let mut gb = vec![0.0f32; o];
        for ni in 0..n {
            for oc in 0..o {
                let base = (ni * o + oc) * ohw;
                gb[oc] += grad_out[base..base + ohw].iter().sum::<f32>();
            }
        }
        grads.accumulate(bias, &gb);
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward_sample(
    ni: usize,
    input: &[f32],
    weight: &[f32],
    grad_out: &[f32],
    gin_n: Option<&mut [f32]>,
    dims: (usize, usize, usize, usize, usize, usize, usize, usize, usize, usize),
    need_weight: bool,
) -> Vec<f32> {
    let (_n, c_in, h, w, o, k, stride, padding, oh, ow) = dims;
    let ohw = oh * ow;
    let k_dim = c_in * k * k;
    let g_n = &grad_out[ni * o * ohw..(ni + 1) * o * ohw];

    let mut gw_n = vec![0.0f32; if need_weight { o * k_dim } else { 0 }];
    if need_weight {
        let sample = &input[ni * c_in * h * w..(ni + 1) * c_in * h * w];
        let mut cols = vec![0.0f32; k_dim * ohw];
        kernels::im2col(sample, c_in, h, w, k, stride, padding, oh, ow, &mut cols);
        kernels::matmul_abt(&mut gw_n, g_n, &cols, o, k_dim, ohw);
    }
    if let Some(gin_n) = gin_n {
        let mut gcols = vec![0.0f32; k_dim * ohw];
        kernels::matmul_atb(&mut gcols, weight, g_n, o, k_dim, ohw);
        kernels::col2im_acc(&gcols, c_in, h, w, k, stride, padding, oh, ow, gin_n);
    }
    gw_n
}

#[allow(clippy::too_many_arguments)]
fn group_norm_backward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    groups: usize,
    mean: &[f32],
    inv_std: &[f32],
    grad_out: &[f32],
    grads: &mut Gradients,
) -> Result<()> {
    let (n, c, h, w) = input.dims4("group_norm_backward")?;
    let group_size = c / groups;
    let m = group_size * h * w;
    let x = input.data();
    let g = gamma.data();

    if gamma.requires_grad() || beta.requires_grad() {
        let mut dgamma = vec![0.0f32; c];
        let mut dbeta = vec![0.0f32; c];
        for ni in 0..n {
            for ch in 0..c {
                let gi = ch / group_size;
                let mu = mean[ni * groups + gi];
                let is = inv_std[ni * groups + gi];
                let off = (ni * c + ch) * h * w;
                let mut sg = 0.0f64;
                let mut sb = 0.0f64;
                for j in 0..h * w {
                    let xhat = (x[off + j] - mu) * is;
                    sg += (grad_out[off + j] * xhat) as f64;
                    sb += grad_out[off + j] as f64;
                }
                dgamma[ch] += sg as f32;
                dbeta[ch] += sb as f32;
            }
        }
        if gamma.requires_grad() {
            grads.accumulate(gamma, &dgamma);
        }
        if beta.requires_grad() {
            grads.accumulate(beta, &dbeta);
        }
    }

    if input.requires_grad() {
        let mut gin = vec![0.0f32; input.numel()];
        for ni in 0..n {
            for gi in 0..groups {
                let mu = mean[ni * groups + gi] as f64;
                let is = inv_std[ni * groups + gi] as f64;
                // Two reduction passes over the group, then the pointwise rule
                //   dx = is * (dxhat - (sum1 + xhat * sum2) / m)
                let mut sum1 = 0.0f64;
                let mut sum2 = 0.0f64;
                for ci in 0..group_size {
                    let ch = gi * group_size + ci;
                    let off = (ni * c + ch) * h * w;
                    let gc = g[ch] as f64;
                    for j in 0..h * w {
                        let xhat = (x[off + j] as f64 - mu) * is;
                        let dxhat = grad_out[off + j] as f64 * gc;
                        sum1 += dxhat;
                        sum2 += dxhat * xhat;
                    }
                }
                for ci in 0..group_size {
                    let ch = gi * group_size + ci;
                    let off = (ni * c + ch) * h * w;
                    let gc = g[ch] as f64;
                    for j in 0..h * w {
                        let xhat = (x[off + j] as f64 - mu) * is;
                        let dxhat = grad_out[off + j] as f64 * gc;
                        gin[off + j] = (is * (dxhat - (sum1 + xhat * sum2) / m as f64)) as f32;
                    }
                }
            }
        }
        grads.accumulate(input, &gin);
    }
    Ok(())
}
