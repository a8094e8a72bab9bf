//! Nearest-neighbor up-sampling.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Upsample {
    pub factor: usize,
}

impl Upsample {
    pub fn new(factor: usize) -> Result<Self> {
        if factor < 1 {
            return Err(Error::invalid("factor", "must be >= 1"));
        }
        Ok(Upsample { factor })
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.dims4("upsample")?;
        let k = self.factor;
        let (oh, ow) = (h * k, w * k);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        for (src, dst) in x.data().chunks_exact(h * w).zip(out.data_mut().chunks_exact_mut(oh * ow)) {
            for oy in 0..oh {
                let row = &src[(oy / k) * w..(oy / k + 1) * w];
                for (ox, d) in dst[oy * ow..(oy + 1) * ow].iter_mut().enumerate() {
                    *d = row[ox / k];
                }
            }
        }
        Ok(out)
    }

    /// Sums each `k x k` block of the upstream gradient.
    pub fn backward<T: Scalar>(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, oh, ow] = grad_out.dims4("upsample backward")?;
        let k = self.factor;
        if oh % k != 0 || ow % k != 0 {
            return Err(Error::shape("upsample backward", alloc::format!("{oh}x{ow} not divisible by {k}")));
        }
        let (h, w) = (oh / k, ow / k);
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        for (g, d) in grad_out.data().chunks_exact(oh * ow).zip(dx.data_mut().chunks_exact_mut(h * w)) {
            for oy in 0..oh {
                for ox in 0..ow {
                    d[(oy / k) * w + ox / k] += g[oy * ow + ox];
                }
            }
        }
        Ok(dx)
    }
}
