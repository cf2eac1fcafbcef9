//! Channel-axis concat and split: the pair of ops that assemble and take
//! apart the joint RGB+matte latent. They are exact inverses.

use super::{Op, Tensor};
use crate::error::{Error, Result};

/// Channel axis position for CHW (rank 3) and NCHW (rank 4) tensors.
fn channel_axis(t: &Tensor, op: &'static str) -> Result<usize> {
    match t.shape().len() {
        3 => Ok(0),
        4 => Ok(1),
        r => Err(Error::shape(
            op,
            format!("expected rank 3 or 4 tensor, got rank {}", r),
        )),
    }
}

/// Sizes (outer, channels, inner) around the channel axis.
pub(crate) fn channel_view(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    let axis = channel_axis(t, op)?;
    let shape = t.shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl Tensor {
    /// Concatenate along the channel axis; all other dims must match.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        let (outer_a, ca, inner_a) = channel_view(self, "concat_channels")?;
        let (outer_b, cb, inner_b) = channel_view(other, "concat_channels")?;
        if outer_a != outer_b || inner_a != inner_b || self.shape().len() != other.shape().len() {
            return Err(Error::shape(
                "concat_channels",
                format!(
                    "non-channel dims differ: {:?} vs {:?}",
                    self.shape(),
                    other.shape()
                ),
            ));
        }
        let mut out = Vec::with_capacity(self.numel() + other.numel());
        let a = self.data();
        let b = other.data();
        for i in 0..outer_a {
            out.extend_from_slice(&a[i * ca * inner_a..(i + 1) * ca * inner_a]);
            out.extend_from_slice(&b[i * cb * inner_b..(i + 1) * cb * inner_b]);
        }
        let mut shape = self.shape().to_vec();
        let axis = shape.len() - 3;
        shape[axis] = ca + cb;
        let requires = self.requires_grad() || other.requires_grad();
        let op = Op::ConcatChannels {
            lhs: self.clone(),
            rhs: other.clone(),
        };
        Ok(if requires {
            Tensor::from_parts(shape, out, op, true)
        } else {
            Tensor::from_parts(shape, out, Op::Leaf, false)
        })
    }

    /// Channel slice `[from, to)`.
    pub fn slice_channels(&self, from: usize, to: usize) -> Result<Tensor> {
        let (outer, c, inner) = channel_view(self, "slice_channels")?;
        if from >= to || to > c {
            return Err(Error::shape(
                "slice_channels",
                format!("slice [{}, {}) out of {} channels", from, to, c),
            ));
        }
        let width = to - from;
        let mut out = Vec::with_capacity(outer * width * inner);
        let data = self.data();
        for i in 0..outer {
            let base = i * c * inner;
            out.extend_from_slice(&data[base + from * inner..base + to * inner]);
        }
        let mut shape = self.shape().to_vec();
        let axis = shape.len() - 3;
        shape[axis] = width;
        let requires = self.requires_grad();
        let op = Op::SliceChannels {
            input: self.clone(),
            from,
            to,
        };
        Ok(if requires {
            Tensor::from_parts(shape, out, op, true)
        } else {
            Tensor::from_parts(shape, out, Op::Leaf, false)
        })
    }

    /// Split at channel `at` into `([0, at), [at, C))`.
    pub fn split_channels(&self, at: usize) -> Result<(Tensor, Tensor)> {
        let (_, c, _) = channel_view(self, "split_channels")?;
        if at == 0 || at >= c {
            return Err(Error::shape(
                "split_channels",
                format!("split point {} outside (0, {})", at, c),
            ));
        }
        Ok((self.slice_channels(0, at)?, self.slice_channels(at, c)?))
    }
}
