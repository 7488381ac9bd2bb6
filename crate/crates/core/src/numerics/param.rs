use alloc::string::String;

use super::{Rng, Tensor};
use crate::Result;

/// A learnable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    UniformFanIn(usize),
    Zeros,
}

impl Parameter {
    pub fn from_value(name: impl Into<String>, value: Tensor) -> Self {
        let zeros = Tensor::from_parts(value.shape().to_vec(), alloc::vec![0.0; value.len()]);
        Self {
            name: name.into(),
            grad: zeros.clone(),
            first_moment: zeros.clone(),
            second_moment: zeros,
            value,
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

pub fn init_parameter(
    rng: &mut Rng,
    name: impl Into<String>,
    shape: &[usize],
    scheme: Init,
) -> Result<Parameter> {
    let mut value = Tensor::zeros(shape)?;
    if let Init::UniformFanIn(fan_in) = scheme {
        let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
        for v in value.data_mut() {
            *v = rng.uniform(-bound, bound);
        }
    }
    Ok(Parameter::from_value(name, value))
}
