use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major array of rank 1 to 3.
///
/// Rank-3 tensors are laid out as (batch, length, channels), so a single
/// timestep's channels are contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

/// Right-hand side of an elementwise op. Broadcasting is limited to
/// scalar-versus-tensor.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f64),
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 3 {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "rank must be 1, 2 or 3".to_string(),
        });
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "extents must be positive".to_string(),
        });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// Builds a tensor, rejecting bad shapes, length mismatches and
    /// non-finite values.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: alloc::format!("expected {len} values, got {}", data.len()),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "tensor construction".to_string(),
                index,
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        t.data.fill(value);
        Ok(t)
    }

    /// Internal constructor for results whose shape is known to be valid.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Same data under a different shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Extents of a rank-3 tensor as (batch, length, channels).
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [b, l, c] => Ok((b, l, c)),
            _ => Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "expected (batch, length, channels)".to_string(),
            }),
        }
    }

    /// Extents of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [r, c] => Ok((r, c)),
            _ => Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "expected rank 2".to_string(),
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "dot",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "max_abs_diff",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, libm::fabs(a - b))))
    }

    pub fn elementwise(&self, op: ElementwiseOp, rhs: Operand<'_>) -> Result<Tensor> {
        let f = |a: f64, b: f64| match op {
            ElementwiseOp::Add => a + b,
            ElementwiseOp::Sub => a - b,
            ElementwiseOp::Mul => a * b,
        };
        let data = match rhs {
            Operand::Scalar(s) => self.data.iter().map(|&a| f(a, s)).collect(),
            Operand::Tensor(t) => {
                if t.shape != self.shape {
                    return Err(Error::ShapeMismatch {
                        op: "elementwise",
                        left: self.shape.clone(),
                        right: t.shape.clone(),
                    });
                }
                self.data.iter().zip(&t.data).map(|(&a, &b)| f(a, b)).collect()
            }
        };
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.elementwise(ElementwiseOp::Add, Operand::Tensor(rhs))
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.elementwise(ElementwiseOp::Sub, Operand::Tensor(rhs))
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.elementwise(ElementwiseOp::Mul, Operand::Tensor(rhs))
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|a| a * s).collect())
    }

    pub fn tanh(&self) -> Tensor {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&a| libm::tanh(a)).collect(),
        )
    }

    /// `self += rhs` in place.
    pub fn add_assign(&mut self, rhs: &Tensor) -> Result<()> {
        if rhs.shape != self.shape {
            return Err(Error::ShapeMismatch {
                op: "add_assign",
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }
}
