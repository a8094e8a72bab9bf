//! Adadelta: steps scaled by the ratio of running RMS of past updates to
//! running RMS of gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdadeltaParams {
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl Default for AdadeltaParams {
    fn default() -> Self {
        AdadeltaParams {
            rho: 0.95,
            epsilon: 1e-7,
            learning_rate: 1.0,
        }
    }
}

/// Running averages `E[g^2]` and `E[dx^2]`, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState<T> {
    pub sq_grad: Vec<T>,
    pub sq_update: Vec<T>,
}

impl<T: Scalar> AdadeltaState<T> {
    pub fn new(len: usize) -> Self {
        AdadeltaState {
            sq_grad: vec![T::zero(); len],
            sq_update: vec![T::zero(); len],
        }
    }
}

/// One update of `params` in place.
pub fn adadelta_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdadeltaState<T>,
    hp: &AdadeltaParams,
) -> Result<()> {
    if params.len() != grads.len() || state.sq_grad.len() != params.len() || state.sq_update.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let rho = T::from_f64(hp.rho);
    let one_minus = T::one() - rho;
    let eps = T::from_f64(hp.epsilon);
    let lr = T::from_f64(hp.learning_rate);
    for (((p, &g), eg), ex) in params
        .iter_mut()
        .zip(grads)
        .zip(state.sq_grad.iter_mut())
        .zip(state.sq_update.iter_mut())
    {
        *eg = rho * *eg + one_minus * g * g;
        let delta = -((*ex + eps).sqrt() / (*eg + eps).sqrt()) * g;
        *ex = rho * *ex + one_minus * delta * delta;
        *p += lr * delta;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradient_decays_state_only() {
        let mut p = vec![1.5f64];
        let mut s = AdadeltaState::new(1);
        s.sq_grad[0] = 0.4;
        s.sq_update[0] = 0.2;
        adadelta_step(&mut p, &[0.0], &mut s, &AdadeltaParams::default()).unwrap();
        assert_eq!(p[0], 1.5);
        assert_relative_eq!(s.sq_grad[0], 0.38, epsilon = 1e-15);
        assert_relative_eq!(s.sq_update[0], 0.19, epsilon = 1e-15);
    }

    #[test]
    fn first_step_hand_evaluation() {
        let mut p = vec![0.0f64];
        let mut s = AdadeltaState::new(1);
        adadelta_step(&mut p, &[1.0], &mut s, &AdadeltaParams::default()).unwrap();
        // E[g^2] = 0.05, E[dx^2] = 0 before the step.
        let expect = -(1e-7f64 / (0.05 + 1e-7)).sqrt();
        assert_relative_eq!(p[0], expect, max_relative = 1e-12);
        assert_relative_eq!(p[0], -1.414_212_7e-3, max_relative = 1e-6);
        assert_relative_eq!(s.sq_update[0], 0.05 * expect * expect, max_relative = 1e-12);
    }

    #[test]
    fn constant_gradient_converges_to_steady_ratio() {
        // Fixed point of the two averages under g = 1: E[g^2] -> 1 and
        // E[dx^2] -> d^2 with d = sqrt(E[dx^2] + eps): the step grows while
        // the ratio d_{t+1} / d_t tends to one.
        let hp = AdadeltaParams::default();
        let mut p = vec![0.0f64];
        let mut s = AdadeltaState::new(1);
        let mut steps = Vec::new();
        for _ in 0..4000 {
            let before = p[0];
            adadelta_step(&mut p, &[1.0], &mut s, &hp).unwrap();
            steps.push(before - p[0]);
        }
        assert_relative_eq!(s.sq_grad[0], 1.0, epsilon = 1e-12);
        let ratios: Vec<f64> = steps.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios.iter().all(|&r| r >= 1.0));
        assert!((ratios[ratios.len() - 1] - 1.0).abs() < (ratios[10] - 1.0).abs());
        assert!(s.sq_grad[0].is_finite() && s.sq_update[0] >= 0.0);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![0.0f32];
        let mut s = AdadeltaState::new(1);
        assert_eq!(
            adadelta_step(&mut p, &[f32::NAN], &mut s, &AdadeltaParams::default()),
            Err(Error::NonFinite("gradient"))
        );
    }
}
