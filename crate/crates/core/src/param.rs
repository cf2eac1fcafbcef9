use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Named trainable tensor. Names are dot-separated paths, unique within a
/// model, and stable across save/load.
pub struct Parameter {
    name: String,
    tensor: Tensor,
}

impl Parameter {
    pub fn from_data(name: impl Into<String>, data: Vec<f32>, shape: &[usize]) -> Result<Parameter> {
        Ok(Parameter {
            name: name.into(),
            tensor: Tensor::leaf_with_grad(data, shape)?,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Parameter {
        let numel: usize = shape.iter().product();
        Parameter::from_data(name, vec![0.0; numel], shape).expect("consistent shape")
    }

    pub fn ones(name: impl Into<String>, shape: &[usize]) -> Parameter {
        let numel: usize = shape.iter().product();
        Parameter::from_data(name, vec![1.0; numel], shape).expect("consistent shape")
    }

    /// Gaussian init with the given standard deviation.
    pub fn randn(name: impl Into<String>, shape: &[usize], std: f32, rng: &mut ChaCha8Rng) -> Parameter {
        let numel: usize = shape.iter().product();
        let data = rng::normal_vec(rng, numel).iter().map(|v| v * std).collect();
        Parameter::from_data(name, data, shape).expect("consistent shape")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    /// Replace the stored values, e.g. after an optimizer step or a
    /// checkpoint load. The shape is fixed at construction.
    pub fn set_data(&mut self, data: Vec<f32>) -> Result<()> {
        if data.len() != self.tensor.numel() {
            return Err(Error::shape(
                "set_data",
                format!(
                    "parameter {} has {} values, got {}",
                    self.name,
                    self.tensor.numel(),
                    data.len()
                ),
            ));
        }
        self.tensor = Tensor::leaf_with_grad(data, &self.tensor.shape().to_vec())?;
        Ok(())
    }
}
