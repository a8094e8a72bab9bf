//! L2 weight and L1 activity regularization.

use alloc::vec::Vec;

use crate::scalar::Scalar;

/// `lambda * sum w^2`.
pub fn l2_loss<T: Scalar>(weights: &[T], lambda: T) -> T {
    lambda * weights.iter().map(|&w| w * w).sum::<T>()
}

/// Adds `2 lambda w` to `grad`.
pub fn add_l2_grad<T: Scalar>(weights: &[T], grad: &mut [T], lambda: T) {
    let c = T::from_f64(2.0) * lambda;
    for (g, &w) in grad.iter_mut().zip(weights) {
        *g += c * w;
    }
}

/// `lambda * sum |a|`.
pub fn l1_loss<T: Scalar>(activations: &[T], lambda: T) -> T {
    lambda * activations.iter().map(|a| a.abs()).sum::<T>()
}

/// Adds the subgradient `lambda * sign(a)` to `grad`, with `sign(0) = 0`.
pub fn add_l1_grad<T: Scalar>(activations: &[T], grad: &mut [T], lambda: T) {
    for (g, &a) in grad.iter_mut().zip(activations) {
        if a > T::zero() {
            *g += lambda;
        } else if a < T::zero() {
            *g -= lambda;
        }
    }
}

/// Both penalty terms and their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalties<T> {
    pub weight_loss: T,
    pub activity_loss: T,
    pub weight_grad: Vec<T>,
    pub activity_grad: Vec<T>,
}

pub fn penalties<T: Scalar>(weights: &[T], activations: &[T], lambda_w: T, lambda_a: T) -> Penalties<T> {
    let mut weight_grad = alloc::vec![T::zero(); weights.len()];
    let mut activity_grad = alloc::vec![T::zero(); activations.len()];
    add_l2_grad(weights, &mut weight_grad, lambda_w);
    add_l1_grad(activations, &mut activity_grad, lambda_a);
    Penalties {
        weight_loss: l2_loss(weights, lambda_w),
        activity_loss: l1_loss(activations, lambda_a),
        weight_grad,
        activity_grad,
    }
}
