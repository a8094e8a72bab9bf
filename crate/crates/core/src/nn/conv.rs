//! Stride-1 2-D convolution and transposed convolution via im2col + GEMM.

use alloc::format;
use alloc::vec;

use rand::Rng;

use super::{glorot_uniform, Param};
use crate::error::{Error, Result};
use crate::scalar::{row_major, transposed, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Padding {
    Valid,
    /// `(k - 1) / 2` zeros per side; preserves size for odd kernels.
    Same,
    Explicit(usize),
}

impl Padding {
    pub fn amount(self, kernel: usize) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Same => (kernel - 1) / 2,
            Padding::Explicit(p) => p,
        }
    }
}

/// Geometry of one stride-1 correlation: a `c x h x w` image, a `k x k`
/// window and `pad` zeros per side, giving an `oh x ow` response.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Window {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Window {
    pub fn new(c: usize, h: usize, w: usize, k: usize, pad: usize) -> Option<Self> {
        let (hp, wp) = (h + 2 * pad, w + 2 * pad);
        if hp < k || wp < k {
            return None;
        }
        Some(Window {
            c,
            h,
            w,
            k,
            pad,
            oh: hp - k + 1,
            ow: wp - k + 1,
        })
    }

    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Output columns `ox` whose input column `ox + kj - pad` is inside the
    /// image.
    #[inline]
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kj);
        let hi = (self.w + self.pad).saturating_sub(kj).min(self.ow);
        (lo, hi)
    }

    /// Unfolds `x` (`c*h*w`) into `cols` (`rows x positions`).
    pub fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let p = self.positions();
        let mut r = 0;
        for ci in 0..self.c {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let out = &mut cols[r * p..(r + 1) * p];
                    let (lo, hi) = self.valid_cols(kj);
                    for oy in 0..self.oh {
                        let row = &mut out[oy * self.ow..(oy + 1) * self.ow];
                        let iy = oy + ki;
                        if iy < self.pad || iy - self.pad >= self.h {
                            row.fill(T::zero());
                            continue;
                        }
                        if lo >= hi {
                            row.fill(T::zero());
                            continue;
                        }
                        let src = &plane[(iy - self.pad) * self.w..(iy - self.pad + 1) * self.w];
                        row[..lo].fill(T::zero());
                        row[hi..].fill(T::zero());
                        let off = lo + kj - self.pad;
                        row[lo..hi].copy_from_slice(&src[off..off + (hi - lo)]);
                    }
                    r += 1;
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters `cols` back, adding into `x`.
    pub fn col2im<T: Scalar>(&self, cols: &[T], x: &mut [T]) {
        let p = self.positions();
        let mut r = 0;
        for ci in 0..self.c {
            let plane = &mut x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let src = &cols[r * p..(r + 1) * p];
                    let (lo, hi) = self.valid_cols(kj);
                    for oy in 0..self.oh {
                        let iy = oy + ki;
                        if lo >= hi || iy < self.pad || iy - self.pad >= self.h {
                            continue;
                        }
                        let dst = &mut plane[(iy - self.pad) * self.w..(iy - self.pad + 1) * self.w];
                        let off = lo + kj - self.pad;
                        for (d, &s) in dst[off..off + (hi - lo)]
                            .iter_mut()
                            .zip(&src[oy * self.ow + lo..oy * self.ow + hi])
                        {
                            *d += s;
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_exact_mut(plane).zip(bias) {
        for v in chunk {
            *v += b;
        }
    }
}

fn accumulate_bias_grad<T: Scalar>(grad: &[T], bias_grad: &mut [T], plane: usize) {
    for (chunk, b) in grad.chunks_exact(plane).zip(bias_grad) {
        *b += chunk.iter().copied().sum::<T>();
    }
}

/// `out_maps x in_maps x k x k` correlation with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub padding: Padding,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_maps: usize, out_maps: usize, kernel: usize, padding: Padding, rng: &mut impl Rng) -> Self {
        let fan = kernel * kernel;
        let weight = glorot_uniform(&[out_maps, in_maps, kernel, kernel], in_maps * fan, out_maps * fan, rng);
        Self::from_parts(weight, Tensor::zeros(&[out_maps]), padding).expect("consistent shapes")
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>, padding: Padding) -> Result<Self> {
        let [o, _, kh, kw] = weight.dims4("conv2d weight")?;
        if kh != kw || bias.shape() != [o] {
            return Err(Error::shape(
                "conv2d",
                format!("weight {:?} with bias {:?}", weight.shape(), bias.shape()),
            ));
        }
        Ok(Conv2d {
            weight: Param::new(weight),
            bias: Param::new(bias),
            padding,
        })
    }

    pub fn in_maps(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_maps(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn window(&self, x: &Tensor<T>) -> Result<(usize, Window)> {
        let [n, c, h, w] = x.dims4("conv2d")?;
        if c != self.in_maps() {
            return Err(Error::shape(
                "conv2d",
                format!("input has {c} channels, layer expects {}", self.in_maps()),
            ));
        }
        let k = self.kernel();
        let win = Window::new(c, h, w, k, self.padding.amount(k))
            .ok_or_else(|| Error::shape("conv2d", format!("{h}x{w} input smaller than {k}x{k} kernel")))?;
        Ok((n, win))
    }

    pub fn output_shape(&self, x: &Tensor<T>) -> Result<[usize; 4]> {
        let (n, win) = self.window(x)?;
        Ok([n, self.out_maps(), win.oh, win.ow])
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, win) = self.window(x)?;
        let (o, r, p) = (self.out_maps(), win.rows(), win.positions());
        let mut out = Tensor::zeros(&[n, o, win.oh, win.ow]);
        let mut cols = vec![T::zero(); r * p];
        for s in 0..n {
            win.im2col(x.outer(s), &mut cols);
            let y = out.outer_mut(s);
            T::gemm(o, r, p, T::one(), self.weight.value.data(), row_major(r), &cols, row_major(p), T::zero(), y, row_major(p));
            add_bias(y, self.bias.value.data(), p);
        }
        Ok(out)
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `input_grad` is set.
    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>, input_grad: bool) -> Result<Option<Tensor<T>>> {
        let (n, win) = self.window(x)?;
        let (o, r, p) = (self.out_maps(), win.rows(), win.positions());
        if grad_out.shape() != [n, o, win.oh, win.ow] {
            return Err(Error::shape(
                "conv2d backward",
                format!("upstream {:?}, forward output [{n}, {o}, {}, {}]", grad_out.shape(), win.oh, win.ow),
            ));
        }
        let mut cols = vec![T::zero(); r * p];
        let mut dcols = vec![T::zero(); if input_grad { r * p } else { 0 }];
        let mut dx = input_grad.then(|| Tensor::zeros(x.shape()));
        for s in 0..n {
            let g = grad_out.outer(s);
            win.im2col(x.outer(s), &mut cols);
            T::gemm(o, p, r, T::one(), g, row_major(p), &cols, transposed(p), T::one(), self.weight.grad.data_mut(), row_major(r));
            accumulate_bias_grad(g, self.bias.grad.data_mut(), p);
            if let Some(dx) = dx.as_mut() {
                T::gemm(r, o, p, T::one(), self.weight.value.data(), transposed(r), g, row_major(p), T::zero(), &mut dcols, row_major(p));
                win.col2im(&dcols, dx.outer_mut(s));
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Stride-1 transposed convolution, weight `in_maps x out_maps x k x k`.
///
/// With `Padding::Valid` the output grows by `k - 1`: the adjoint of a valid
/// correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct Deconv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub padding: Padding,
}

impl<T: Scalar> Deconv2d<T> {
    pub fn new(in_maps: usize, out_maps: usize, kernel: usize, padding: Padding, rng: &mut impl Rng) -> Self {
        let fan = kernel * kernel;
        let weight = glorot_uniform(&[in_maps, out_maps, kernel, kernel], out_maps * fan, in_maps * fan, rng);
        Self::from_parts(weight, Tensor::zeros(&[out_maps]), padding).expect("consistent shapes")
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>, padding: Padding) -> Result<Self> {
        let [_, o, kh, kw] = weight.dims4("deconv2d weight")?;
        if kh != kw || bias.shape() != [o] {
            return Err(Error::shape(
                "deconv2d",
                format!("weight {:?} with bias {:?}", weight.shape(), bias.shape()),
            ));
        }
        Ok(Deconv2d {
            weight: Param::new(weight),
            bias: Param::new(bias),
            padding,
        })
    }

    pub fn in_maps(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_maps(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Window over the *output* image whose correlation response has the
    /// input's size.
    fn window(&self, x: &Tensor<T>) -> Result<(usize, Window)> {
        let [n, c, h, w] = x.dims4("deconv2d")?;
        if c != self.in_maps() {
            return Err(Error::shape(
                "deconv2d",
                format!("input has {c} channels, layer expects {}", self.in_maps()),
            ));
        }
        let k = self.kernel();
        let pad = self.padding.amount(k);
        let (oh, ow) = ((h + k - 1).checked_sub(2 * pad), (w + k - 1).checked_sub(2 * pad));
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(Error::shape("deconv2d", format!("padding {pad} too large for {h}x{w}")));
        };
        let win = Window::new(self.out_maps(), oh, ow, k, pad)
            .filter(|win| win.oh == h && win.ow == w)
            .ok_or_else(|| Error::shape("deconv2d", format!("degenerate output {oh}x{ow}")))?;
        Ok((n, win))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, win) = self.window(x)?;
        let (i, r, p) = (self.in_maps(), win.rows(), win.positions());
        let mut out = Tensor::zeros(&[n, self.out_maps(), win.h, win.w]);
        let mut cols = vec![T::zero(); r * p];
        for s in 0..n {
            T::gemm(r, i, p, T::one(), self.weight.value.data(), transposed(r), x.outer(s), row_major(p), T::zero(), &mut cols, row_major(p));
            let y = out.outer_mut(s);
            win.col2im(&cols, y);
            add_bias(y, self.bias.value.data(), win.h * win.w);
        }
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>, input_grad: bool) -> Result<Option<Tensor<T>>> {
        let (n, win) = self.window(x)?;
        let (i, r, p) = (self.in_maps(), win.rows(), win.positions());
        if grad_out.shape() != [n, self.out_maps(), win.h, win.w] {
            return Err(Error::shape(
                "deconv2d backward",
                format!("upstream {:?}, forward output [{n}, {}, {}, {}]", grad_out.shape(), self.out_maps(), win.h, win.w),
            ));
        }
        let mut dcols = vec![T::zero(); r * p];
        let mut dx = input_grad.then(|| Tensor::zeros(x.shape()));
        for s in 0..n {
            let g = grad_out.outer(s);
            win.im2col(g, &mut dcols);
            T::gemm(i, p, r, T::one(), x.outer(s), row_major(p), &dcols, transposed(p), T::one(), self.weight.grad.data_mut(), row_major(r));
            accumulate_bias_grad(g, self.bias.grad.data_mut(), win.h * win.w);
            if let Some(dx) = dx.as_mut() {
                T::gemm(i, r, p, T::one(), self.weight.value.data(), row_major(r), &dcols, row_major(p), T::zero(), dx.outer_mut(s), row_major(p));
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{assert_close, dot, numeric_grad, probe};
    use crate::seed;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = seed::rng(seed);
        Tensor::from_fn(shape, |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    /// Direct nested-loop correlation used as the forward oracle.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], pad: usize) -> Tensor<f64> {
        let [n, c, h, wd] = x.dims4("x").unwrap();
        let [o, _, k, _] = w.dims4("w").unwrap();
        let (oh, ow) = (h + 2 * pad - k + 1, wd + 2 * pad - k + 1);
        let mut out = Tensor::zeros(&[n, o, oh, ow]);
        for s in 0..n {
            for oc in 0..o {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = b[oc];
                        for ic in 0..c {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (y + ki) as isize - pad as isize;
                                    let ix = (xx + kj) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((s * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((oc * c + ic) * k + ki) * k + kj];
                                }
                            }
                        }
                        out.data_mut()[((s * o + oc) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn valid_28_gives_24() {
        let mut rng = seed::rng(0);
        let conv = Conv2d::<f32>::new(1, 3, 5, Padding::Valid, &mut rng);
        let y = conv.forward(&Tensor::zeros(&[2, 1, 28, 28])).unwrap();
        assert_eq!(y.shape(), &[2, 3, 24, 24]);
    }

    #[test]
    fn delta_kernel_same_padding_is_identity() {
        let mut w = Tensor::<f64>::zeros(&[1, 1, 5, 5]);
        w.data_mut()[12] = 1.0;
        let conv = Conv2d::from_parts(w, Tensor::zeros(&[1]), Padding::Same).unwrap();
        let x = random(&[1, 1, 7, 6], 3);
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn ones_kernel_sums() {
        let w = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
        let conv = Conv2d::from_parts(w, Tensor::zeros(&[1]), Padding::Valid).unwrap();
        let x = Tensor::from_vec(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(conv.forward(&x).unwrap().data(), &[45.0]);
    }

    #[test]
    fn forward_matches_naive_loops() {
        for (pad, padding) in [(0, Padding::Valid), (2, Padding::Same), (1, Padding::Explicit(1))] {
            let x = random(&[2, 3, 7, 8], 10);
            let w = random(&[4, 3, 5, 5], 11);
            let b = random(&[4], 12);
            let conv = Conv2d::from_parts(w.clone(), b.clone(), padding).unwrap();
            let fast = conv.forward(&x).unwrap();
            let slow = naive_conv(&x, &w, b.data(), pad);
            assert_eq!(fast.shape(), slow.shape());
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut rng = seed::rng(0);
        let mut conv = Conv2d::<f64>::new(2, 3, 5, Padding::Valid, &mut rng);
        assert!(conv.forward(&Tensor::zeros(&[1, 1, 8, 8])).is_err());
        assert!(conv.forward(&Tensor::zeros(&[1, 2, 4, 4])).is_err());
        let x = Tensor::zeros(&[1, 2, 8, 8]);
        assert!(conv.backward(&x, &Tensor::zeros(&[1, 3, 5, 5]), true).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seed::rng(4);
        let mut conv = Conv2d::<f64>::new(2, 3, 5, Padding::Valid, &mut rng);
        let x = random(&[1, 2, 6, 6], 1);
        let dx = conv.backward(&x, &Tensor::zeros(&[1, 3, 2, 2]), true).unwrap().unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(conv.weight.grad.data().iter().all(|&v| v == 0.0));
        assert!(conv.bias.grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_upstream_gives_input_patch() {
        let mut rng = seed::rng(4);
        let mut conv = Conv2d::<f64>::new(1, 2, 5, Padding::Valid, &mut rng);
        let x = random(&[1, 1, 6, 6], 2);
        let mut g = Tensor::zeros(&[1, 2, 2, 2]);
        // Output map 1 at (oy, ox) = (1, 0).
        g.data_mut()[4 + 2] = 1.0;
        conv.backward(&x, &g, false).unwrap();
        let kg = conv.weight.grad.data();
        for ki in 0..5 {
            for kj in 0..5 {
                assert_eq!(kg[ki * 5 + kj], 0.0);
                assert_eq!(kg[25 + ki * 5 + kj], x.data()[(1 + ki) * 6 + kj]);
            }
        }
        assert_eq!(conv.bias.grad.data(), &[0.0, 1.0]);
    }

    fn check_conv_gradients(n: usize, c: usize, o: usize, h: usize, w: usize, padding: Padding, seed: u64) {
        let x = random(&[n, c, h, w], seed);
        let weight = random(&[o, c, 5, 5], seed + 1);
        let bias = random(&[o], seed + 2);
        let mut conv = Conv2d::from_parts(weight.clone(), bias.clone(), padding).unwrap();
        let out_shape = conv.output_shape(&x).unwrap();
        let pr = probe(out_shape.iter().product(), seed + 3);
        let g = Tensor::from_vec(&out_shape, pr.clone()).unwrap();
        let dx = conv.backward(&x, &g, true).unwrap().unwrap();

        let loss = |xs: &[f64], ws: &[f64], bs: &[f64]| {
            let c = Conv2d::from_parts(
                Tensor::from_vec(weight.shape(), ws.to_vec()).unwrap(),
                Tensor::from_vec(bias.shape(), bs.to_vec()).unwrap(),
                padding,
            )
            .unwrap();
            dot(c.forward(&Tensor::from_vec(x.shape(), xs.to_vec()).unwrap()).unwrap().data(), &pr)
        };
        let mut xs = x.data().to_vec();
        let nx = numeric_grad(&mut xs, 1e-5, |xs| loss(xs, weight.data(), bias.data()));
        assert_close(dx.data(), &nx, 1e-4, 1e-6);
        let mut ws = weight.data().to_vec();
        let nw = numeric_grad(&mut ws, 1e-5, |ws| loss(x.data(), ws, bias.data()));
        assert_close(conv.weight.grad.data(), &nw, 1e-4, 1e-6);
        let mut bs = bias.data().to_vec();
        let nb = numeric_grad(&mut bs, 1e-5, |bs| loss(x.data(), weight.data(), bs));
        assert_close(conv.bias.grad.data(), &nb, 1e-4, 1e-6);
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        check_conv_gradients(1, 1, 2, 6, 6, Padding::Valid, 100);
        check_conv_gradients(2, 2, 3, 7, 6, Padding::Same, 200);
        check_conv_gradients(1, 3, 2, 5, 5, Padding::Explicit(1), 300);
    }

    #[test]
    fn deconv_shapes_restore_input() {
        let mut rng = seed::rng(0);
        let d1 = Deconv2d::<f32>::new(4, 3, 5, Padding::Valid, &mut rng);
        let d2 = Deconv2d::<f32>::new(3, 1, 5, Padding::Valid, &mut rng);
        let y = d1.forward(&Tensor::zeros(&[2, 4, 20, 20])).unwrap();
        assert_eq!(y.shape(), &[2, 3, 24, 24]);
        assert_eq!(d2.forward(&y).unwrap().shape(), &[2, 1, 28, 28]);
    }

    #[test]
    fn deconv_delta_kernel_places_padded_copy() {
        let mut w = Tensor::<f64>::zeros(&[1, 1, 5, 5]);
        w.data_mut()[0] = 1.0;
        let d = Deconv2d::from_parts(w, Tensor::zeros(&[1]), Padding::Valid).unwrap();
        let x = random(&[1, 1, 3, 3], 8);
        let y = d.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 7, 7]);
        for r in 0..7 {
            for c in 0..7 {
                let expect = if r < 3 && c < 3 { x.data()[r * 3 + c] } else { 0.0 };
                assert_eq!(y.data()[r * 7 + c], expect);
            }
        }
    }

    #[test]
    fn deconv_is_adjoint_of_conv() {
        // <conv(x), y> = <x, deconv(y)> for shared weights without bias.
        let w = random(&[3, 2, 5, 5], 40);
        let mut wt = Tensor::<f64>::zeros(&[3, 2, 5, 5]);
        wt.data_mut().copy_from_slice(w.data());
        let conv = Conv2d::from_parts(w, Tensor::zeros(&[3]), Padding::Valid).unwrap();
        // Deconv maps 3 -> 2 with weight [in=3, out=2, k, k].
        let deconv = Deconv2d::from_parts(wt, Tensor::zeros(&[2]), Padding::Valid).unwrap();
        let x = random(&[1, 2, 9, 8], 41);
        let y = random(&[1, 3, 5, 4], 42);
        let lhs = dot(conv.forward(&x).unwrap().data(), y.data());
        let rhs = dot(x.data(), deconv.forward(&y).unwrap().data());
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn deconv_gradients_match_finite_differences() {
        for (seed, (n, i, o, h, w)) in [(1u64, (1, 2, 3, 3, 4)), (7, (2, 1, 2, 2, 2))] {
            let x = random(&[n, i, h, w], seed);
            let weight = random(&[i, o, 5, 5], seed + 1);
            let bias = random(&[o], seed + 2);
            let mut d = Deconv2d::from_parts(weight.clone(), bias.clone(), Padding::Valid).unwrap();
            let out = d.forward(&x).unwrap();
            let pr = probe(out.len(), seed + 3);
            let g = Tensor::from_vec(out.shape(), pr.clone()).unwrap();
            let dx = d.backward(&x, &g, true).unwrap().unwrap();
            let loss = |xs: &[f64], ws: &[f64], bs: &[f64]| {
                let d = Deconv2d::from_parts(
                    Tensor::from_vec(weight.shape(), ws.to_vec()).unwrap(),
                    Tensor::from_vec(bias.shape(), bs.to_vec()).unwrap(),
                    Padding::Valid,
                )
                .unwrap();
                dot(d.forward(&Tensor::from_vec(x.shape(), xs.to_vec()).unwrap()).unwrap().data(), &pr)
            };
            let mut xs = x.data().to_vec();
            assert_close(dx.data(), &numeric_grad(&mut xs, 1e-5, |xs| loss(xs, weight.data(), bias.data())), 1e-4, 1e-6);
            let mut ws = weight.data().to_vec();
            assert_close(d.weight.grad.data(), &numeric_grad(&mut ws, 1e-5, |ws| loss(x.data(), ws, bias.data())), 1e-4, 1e-6);
            let mut bs = bias.data().to_vec();
            assert_close(d.bias.grad.data(), &numeric_grad(&mut bs, 1e-5, |bs| loss(x.data(), weight.data(), bs)), 1e-4, 1e-6);
        }
    }
}
