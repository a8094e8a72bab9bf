//! Convolutional building blocks with hand-written backward passes.
//!
//! Activations are `[batch, channels, height, width]` tensors. Layers own
//! their parameters as [`Param`]s; `backward` accumulates into the parameter
//! gradients so a mini-batch can be processed before one optimizer step.

pub mod activation;
pub mod adadelta;
pub mod conv;
pub mod dense;
pub mod loss;
pub mod penalty;
pub mod pool;
pub mod upsample;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;

pub use adadelta::{adadelta_step, AdadeltaParams, AdadeltaState};
pub use conv::{Conv2d, Deconv2d, Padding};
pub use dense::Dense;
pub use pool::{AvgPool2d, MaxPool2d};
pub use upsample::Upsample;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A trainable tensor with its gradient and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub state: AdadeltaState<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        let state = AdadeltaState::new(value.len());
        Param { value, grad, state }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Applies one optimizer step with the accumulated gradient.
    pub fn step(&mut self, hp: &AdadeltaParams) -> crate::Result<()> {
        adadelta_step(self.value.data_mut(), self.grad.data(), &mut self.state, hp)
    }
}

/// Glorot-uniform tensor: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64((rng.random::<f64>() * 2.0 - 1.0) * limit))
}

#[cfg(test)]
pub(crate) mod gradcheck {
    //! Central finite differences for the layer tests.

    use alloc::vec::Vec;

    /// Numerical gradient of `f` at `x` with step `h`.
    pub fn numeric_grad(x: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut g = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let orig = x[i];
            x[i] = orig + h;
            let plus = f(x);
            x[i] = orig - h;
            let minus = f(x);
            x[i] = orig;
            g.push((plus - minus) / (2.0 * h));
        }
        g
    }

    pub fn assert_close(analytic: &[f64], numeric: &[f64], rtol: f64, atol: f64) {
        assert_eq!(analytic.len(), numeric.len());
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let tol = atol + rtol * n.abs().max(a.abs());
            assert!((a - n).abs() <= tol, "index {i}: analytic {a} vs numeric {n}");
        }
    }

    /// Fixed random weighting so a tensor output becomes a scalar loss.
    pub fn probe(len: usize, seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}
