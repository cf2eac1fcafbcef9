//! Dense row-major f32 tensors with a dynamically built computation graph.
//!
//! Every op returns a fresh immutable tensor. When no input of an op
//! requires gradients the node is recorded as a plain leaf, so inference
//! never retains graph history. `backward` walks the graph from a scalar
//! loss and returns a [`Gradients`] store keyed by tensor identity.

mod autograd;
mod kernels;
mod ops;
mod structural;
#[cfg(test)]
mod tests;

pub use autograd::{backward, Gradients};
pub use ops::stack_batch;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Node payload describing how a tensor was produced. Parents are held by
/// value (cheap `Arc` clones) so the graph stays alive exactly as long as
/// some downstream tensor references it.
pub(crate) enum Op {
    Leaf,
    Conv2d {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    Linear {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
    },
    GroupNorm {
        input: Tensor,
        gamma: Tensor,
        beta: Tensor,
        groups: usize,
        /// Saved per-(sample, group) statistics from the forward pass.
        mean: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Silu {
        input: Tensor,
    },
    Add {
        lhs: Tensor,
        rhs: Tensor,
    },
    Scale {
        input: Tensor,
        factor: f32,
    },
    ConcatChannels {
        lhs: Tensor,
        rhs: Tensor,
    },
    /// Channel slice `[from, to)` along the channel axis.
    SliceChannels {
        input: Tensor,
        from: usize,
        to: usize,
    },
    Upsample2x {
        input: Tensor,
    },
    AvgPool2x {
        input: Tensor,
    },
    Mse {
        lhs: Tensor,
        rhs: Tensor,
    },
    /// `[N,C,H,W] + bias[N,C]` broadcast over the spatial dims.
    AddChannelBias {
        input: Tensor,
        bias: Tensor,
    },
    /// Row gather from an embedding table `[V,E]` at `indices` -> `[N,E]`.
    Embed {
        table: Tensor,
        indices: Vec<usize>,
    },
    Reshape {
        input: Tensor,
    },
}

struct TensorInner {
    id: u64,
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
    op: Op,
    requires_grad: bool,
}

/// Immutable dense tensor handle. Cloning shares storage.
#[derive(Clone)]
pub struct Tensor {
    inner: Arc<TensorInner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, grad={})",
            self.inner.id, self.inner.shape, self.inner.requires_grad
        )
    }
}

impl Tensor {
    pub(crate) fn from_parts(
        shape: Vec<usize>,
        data: Vec<f32>,
        op: Op,
        requires_grad: bool,
    ) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Arc::new(TensorInner {
                id: fresh_id(),
                shape,
                data: Arc::new(data),
                op,
                requires_grad,
            }),
        }
    }

    /// New leaf tensor; errors if `data.len()` does not match the shape.
    pub fn from_vec(data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "from_vec",
                format!("shape {:?} wants {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor::from_parts(shape.to_vec(), data, Op::Leaf, false))
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![0.0; numel], Op::Leaf, false)
    }

    pub fn full(shape: &[usize], value: f32) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![value; numel], Op::Leaf, false)
    }

    pub fn scalar(value: f32) -> Tensor {
        Tensor::from_parts(vec![], vec![value], Op::Leaf, false)
    }

    /// Leaf that participates in gradient computation (parameter storage).
    pub fn leaf_with_grad(data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "leaf_with_grad",
                format!("shape {:?} wants {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor::from_parts(shape.to_vec(), data, Op::Leaf, true))
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn op(&self) -> &Op {
        &self.inner.op
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1 && self.inner.shape.iter().all(|&d| d == 1)
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self) -> Result<f32> {
        if self.numel() != 1 {
            return Err(Error::shape(
                "scalar_value",
                format!("tensor of shape {:?} is not a scalar", self.shape()),
            ));
        }
        Ok(self.inner.data[0])
    }

    /// Cut the tensor out of the graph: same storage, no history, no grad.
    pub fn detach(&self) -> Tensor {
        Tensor {
            inner: Arc::new(TensorInner {
                id: fresh_id(),
                shape: self.inner.shape.clone(),
                data: Arc::clone(&self.inner.data),
                op: Op::Leaf,
                requires_grad: false,
            }),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.shape() {
            &[n, c, h, w] => Ok((n, c, h, w)),
            other => Err(Error::shape(
                op,
                format!("expected rank-4 NCHW tensor, got shape {:?}", other),
            )),
        }
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape() {
            &[n, f] => Ok((n, f)),
            other => Err(Error::shape(
                op,
                format!("expected rank-2 tensor, got shape {:?}", other),
            )),
        }
    }
}
