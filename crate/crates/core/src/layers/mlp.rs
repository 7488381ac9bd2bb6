use alloc::format;

use super::{Axis, LinearGrads, LinearMap};
use crate::numerics::Rng;
use crate::{Result, Tensor};

/// Channel-wise `Linear -> tanh -> Linear`, the drop-in replacement for a
/// KAN branch in the order-policy ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub first: LinearMap,
    pub second: LinearMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub input: Tensor,
    pub first: LinearGrads,
    pub second: LinearGrads,
}

impl Mlp {
    pub fn new(name: &str, dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            first: LinearMap::new(&format!("{name}.fc1"), dim, dim, Axis::Channel, rng)?,
            second: LinearMap::new(&format!("{name}.fc2"), dim, dim, Axis::Channel, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let hidden = self.first.forward(x)?.tanh();
        self.second.forward(&hidden)
    }

    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<MlpGrads> {
        let activated = self.first.forward(x)?.tanh();
        let second = self.second.backward(&activated, upstream)?;
        let mut pre_grad = second.input.clone();
        for (g, a) in pre_grad.data_mut().iter_mut().zip(activated.data()) {
            *g *= 1.0 - a * a;
        }
        let first = self.first.backward(x, &pre_grad)?;
        Ok(MlpGrads {
            input: first.input.clone(),
            first,
            second,
        })
    }
}
