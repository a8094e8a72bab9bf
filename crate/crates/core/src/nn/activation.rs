//! Element-wise activations. Backward functions take the forward *output*.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let mut g = grad.clone();
    for (g, &y) in g.data_mut().iter_mut().zip(y.data()) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
    g
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let mut g = grad.clone();
    for (g, &y) in g.data_mut().iter_mut().zip(y.data()) {
        *g *= y * (T::one() - y);
    }
    g
}

/// In-place softmax of one row, shifted by its maximum.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
