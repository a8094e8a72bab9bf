//! Max and average pooling.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn pooled_size(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (n + 2 * pad).checked_sub(k).map(|span| span / stride + 1)
}

/// Max pooling with `pad` virtual `-inf` cells per side. The first
/// (row-major) maximum of each window is the one that receives the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Flat input index of the selected element for every output element.
pub type Argmax = Vec<usize>;

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        MaxPool2d { kernel, stride, pad: 0 }
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kernel == 0 || self.stride == 0 || self.pad >= self.kernel {
            return Err(Error::invalid("maxpool", format!("{self:?}")));
        }
        match (
            pooled_size(h, self.kernel, self.stride, self.pad),
            pooled_size(w, self.kernel, self.stride, self.pad),
        ) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::shape(
                "maxpool",
                format!("window {} larger than {h}x{w} input", self.kernel),
            )),
        }
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Argmax)> {
        let [n, c, h, w] = x.dims4("maxpool")?;
        let (oh, ow) = self.output_size(h, w)?;
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut arg = Vec::with_capacity(out.len());
        let xd = x.data();
        let od = out.data_mut();
        let mut o = 0;
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_i = usize::MAX;
                    for ky in 0..self.kernel {
                        let Some(iy) = (oy * self.stride + ky).checked_sub(self.pad).filter(|&y| y < h) else {
                            continue;
                        };
                        for kx in 0..self.kernel {
                            let Some(ix) = (ox * self.stride + kx).checked_sub(self.pad).filter(|&x| x < w) else {
                                continue;
                            };
                            let i = base + iy * w + ix;
                            if best_i == usize::MAX || xd[i] > best {
                                best = xd[i];
                                best_i = i;
                            }
                        }
                    }
                    od[o] = best;
                    arg.push(best_i);
                    o += 1;
                }
            }
        }
        Ok((out, arg))
    }

    pub fn backward<T: Scalar>(&self, input_shape: &[usize], grad_out: &Tensor<T>, argmax: &[usize]) -> Result<Tensor<T>> {
        if grad_out.len() != argmax.len() {
            return Err(Error::shape(
                "maxpool backward",
                format!("{} upstream values for {} windows", grad_out.len(), argmax.len()),
            ));
        }
        let mut dx = Tensor::zeros(input_shape);
        let d = dx.data_mut();
        for (&i, &g) in argmax.iter().zip(grad_out.data()) {
            d[i] += g;
        }
        Ok(dx)
    }
}

/// Average pooling without padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AvgPool2d {
    pub kernel: usize,
    pub stride: usize,
}

impl AvgPool2d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        AvgPool2d { kernel, stride }
    }

    fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        MaxPool2d::new(self.kernel, self.stride).output_size(h, w)
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.dims4("avgpool")?;
        let (oh, ow) = self.output_size(h, w)?;
        let scale = T::one() / T::from_f64((self.kernel * self.kernel) as f64);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let xd = x.data();
        for (plane, o) in out.data_mut().chunks_exact_mut(oh * ow).enumerate() {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = T::zero();
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            acc += xd[base + (oy * self.stride + ky) * w + ox * self.stride + kx];
                        }
                    }
                    o[oy * ow + ox] = acc * scale;
                }
            }
        }
        Ok(out)
    }

    pub fn backward<T: Scalar>(&self, input_shape: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = (input_shape[2], input_shape[3]);
        let (oh, ow) = self.output_size(h, w)?;
        let scale = T::one() / T::from_f64((self.kernel * self.kernel) as f64);
        let mut dx = Tensor::zeros(input_shape);
        let d = dx.data_mut();
        for (plane, g) in grad_out.data().chunks_exact(oh * ow).enumerate() {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            d[base + (oy * self.stride + ky) * w + ox * self.stride + kx] += g[oy * ow + ox] * scale;
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{assert_close, dot, numeric_grad, probe};
    use crate::seed;
    use rand::Rng;

    #[test]
    fn output_sizes() {
        assert_eq!(MaxPool2d::new(5, 5).output_size(20, 20).unwrap(), (4, 4));
        assert_eq!(MaxPool2d::new(2, 2).output_size(24, 24).unwrap(), (12, 12));
        let padded = MaxPool2d { kernel: 2, stride: 2, pad: 1 };
        assert_eq!(padded.output_size(28, 28).unwrap(), (15, 15));
        assert_eq!(padded.output_size(13, 13).unwrap(), (7, 7));
        assert!(MaxPool2d::new(5, 5).output_size(4, 9).is_err());
    }

    #[test]
    fn constant_input_routes_to_first_element() {
        let x = Tensor::<f64>::full(&[1, 1, 4, 4], 0.5);
        let pool = MaxPool2d::new(2, 2);
        let (y, arg) = pool.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5));
        assert_eq!(arg, vec![0, 2, 8, 10]);
        let g = Tensor::full(&[1, 1, 2, 2], 1.0);
        let dx = pool.backward(x.shape(), &g, &arg).unwrap();
        let expect: Vec<f64> = (0..16).map(|i| if [0, 2, 8, 10].contains(&i) { 1.0 } else { 0.0 }).collect();
        assert_eq!(dx.data(), &expect[..]);
    }

    #[test]
    fn max_dominates_average() {
        let mut rng = seed::rng(3);
        let x = Tensor::<f64>::from_fn(&[2, 3, 10, 10], |_| rng.random::<f64>() * 4.0 - 2.0);
        let (m, _) = MaxPool2d::new(5, 5).forward(&x).unwrap();
        let a = AvgPool2d::new(5, 5).forward(&x).unwrap();
        assert!(m.data().iter().zip(a.data()).all(|(m, a)| m >= a));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seed::rng(17);
        // Distinct values so the argmax is stable under the probe step.
        let x = Tensor::<f64>::from_fn(&[2, 2, 6, 7], |i| i as f64 * 0.01 + rng.random::<f64>());
        for pool in [MaxPool2d::new(2, 2), MaxPool2d::new(3, 2), MaxPool2d { kernel: 2, stride: 2, pad: 1 }] {
            let (y, arg) = pool.forward(&x).unwrap();
            let pr = probe(y.len(), 5);
            let dx = pool.backward(x.shape(), &Tensor::from_vec(y.shape(), pr.clone()).unwrap(), &arg).unwrap();
            let mut xs = x.data().to_vec();
            let num = numeric_grad(&mut xs, 1e-6, |xs| {
                let t = Tensor::from_vec(x.shape(), xs.to_vec()).unwrap();
                dot(pool.forward(&t).unwrap().0.data(), &pr)
            });
            assert_close(dx.data(), &num, 1e-4, 1e-6);
        }
        let avg = AvgPool2d::new(2, 2);
        let y = avg.forward(&x).unwrap();
        let pr = probe(y.len(), 6);
        let dx = avg.backward(x.shape(), &Tensor::from_vec(y.shape(), pr.clone()).unwrap()).unwrap();
        let mut xs = x.data().to_vec();
        let num = numeric_grad(&mut xs, 1e-6, |xs| {
            dot(avg.forward(&Tensor::from_vec(x.shape(), xs.to_vec()).unwrap()).unwrap().data(), &pr)
        });
        assert_close(dx.data(), &num, 1e-4, 1e-6);
    }
}
