//! Fully connected layer over flattened inputs.

use alloc::format;

use rand::Rng;

use super::{glorot_uniform, Param};
use crate::error::{Error, Result};
use crate::scalar::{row_major, transposed, Scalar};
use crate::tensor::Tensor;

/// `y = x W^T + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Dense {
            weight: Param::new(glorot_uniform(&[outputs, inputs], inputs, outputs, rng)),
            bias: Param::new(Tensor::zeros(&[outputs])),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn batch(&self, x: &Tensor<T>) -> Result<usize> {
        let n = *x.shape().first().ok_or(Error::Empty("dense input"))?;
        if n == 0 || x.len() != n * self.inputs() {
            return Err(Error::shape(
                "dense",
                format!("input {:?} for {} features", x.shape(), self.inputs()),
            ));
        }
        Ok(n)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.batch(x)?;
        let (i, o) = (self.inputs(), self.outputs());
        let mut y = Tensor::zeros(&[n, o]);
        T::gemm(n, i, o, T::one(), x.data(), row_major(i), self.weight.value.data(), transposed(i), T::zero(), y.data_mut(), row_major(o));
        for row in y.data_mut().chunks_exact_mut(o) {
            for (v, &b) in row.iter_mut().zip(self.bias.value.data()) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// Gradient with respect to `x`, reshaped like `x`.
    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.batch(x)?;
        let (i, o) = (self.inputs(), self.outputs());
        if grad_out.len() != n * o {
            return Err(Error::shape("dense backward", format!("upstream {:?}", grad_out.shape())));
        }
        let g = grad_out.data();
        T::gemm(o, n, i, T::one(), g, transposed(o), x.data(), row_major(i), T::one(), self.weight.grad.data_mut(), row_major(i));
        for row in g.chunks_exact(o) {
            for (b, &v) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *b += v;
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        T::gemm(n, o, i, T::one(), g, row_major(o), self.weight.value.data(), row_major(i), T::zero(), dx.data_mut(), row_major(i));
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}
