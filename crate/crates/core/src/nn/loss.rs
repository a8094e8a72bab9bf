//! Reconstruction and classification losses with their gradients.

use alloc::vec::Vec;

use super::activation::softmax_in_place;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean squared error over all elements and its gradient.
pub fn mse<T: Scalar>(output: &Tensor<T>, target: &[T]) -> Result<(T, Tensor<T>)> {
    if output.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: output.len(),
            actual: target.len(),
        });
    }
    let n = T::from_f64(output.len() as f64);
    let two = T::from_f64(2.0);
    let mut grad = output.clone();
    let mut loss = T::zero();
    for (g, &t) in grad.data_mut().iter_mut().zip(target) {
        let d = *g - t;
        loss += d * d;
        *g = two * d / n;
    }
    Ok((loss / n, grad))
}

/// Mean softmax cross-entropy of `[n, classes]` logits and the gradient
/// `(p - onehot) / n`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[u8]) -> Result<(T, Tensor<T>)> {
    let n = labels.len();
    if n == 0 || logits.len() % n != 0 || logits.shape()[0] != n {
        return Err(Error::shape(
            "cross-entropy",
            alloc::format!("logits {:?} for {n} labels", logits.shape()),
        ));
    }
    let classes = logits.len() / n;
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::ClassOutOfRange {
            class: bad as usize,
            classes,
        });
    }
    let scale = T::one() / T::from_f64(n as f64);
    let mut grad = logits.clone();
    let mut loss = T::zero();
    let tiny = T::min_positive_value();
    for (row, &l) in grad.data_mut().chunks_exact_mut(classes).zip(labels) {
        softmax_in_place(row);
        loss -= row[l as usize].max(tiny).ln();
        row[l as usize] -= T::one();
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok((loss * scale, grad))
}

/// `argmax` of every row of `[n, classes]` scores.
pub fn predictions<T: Scalar>(scores: &Tensor<T>) -> Vec<u8> {
    let classes = scores.shape()[1..].iter().product::<usize>();
    scores
        .data()
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best as u8
        })
        .collect()
}
