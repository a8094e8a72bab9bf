//! Integrate-and-fire convolution and first-spike pooling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{SpikeWave, NO_SPIKE};
use crate::error::{Error, Result};

/// Convolution kernels with weights in `[0, 1]`, `[out, in, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingConv {
    in_maps: usize,
    out_maps: usize,
    kernel: usize,
    /// Zero (never spiking) border added around the input.
    padding: usize,
    weights: Vec<f32>,
}

impl SpikingConv {
    /// Weights drawn from `N(mean, std)` and clamped to `[0, 1]`.
    pub fn new(
        in_maps: usize,
        out_maps: usize,
        kernel: usize,
        padding: usize,
        mean: f64,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let normal = Normal::new(mean, std).map_err(|e| Error::invalid("weight init", format!("{e}")))?;
        let weights = (0..out_maps * in_maps * kernel * kernel)
            .map(|_| normal.sample(rng).clamp(0.0, 1.0) as f32)
            .collect();
        Self::from_weights(in_maps, out_maps, kernel, padding, weights)
    }

    pub fn from_weights(in_maps: usize, out_maps: usize, kernel: usize, padding: usize, weights: Vec<f32>) -> Result<Self> {
        if in_maps == 0 || out_maps == 0 || kernel == 0 {
            return Err(Error::invalid("spiking conv", "maps and kernel must be >= 1"));
        }
        if weights.len() != out_maps * in_maps * kernel * kernel {
            return Err(Error::DimensionMismatch {
                expected: out_maps * in_maps * kernel * kernel,
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid("weights", "outside [0, 1]"));
        }
        Ok(SpikingConv {
            in_maps,
            out_maps,
            kernel,
            padding,
            weights,
        })
    }

    pub fn in_maps(&self) -> usize {
        self.in_maps
    }

    pub fn out_maps(&self) -> usize {
        self.out_maps
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    #[inline]
    pub(crate) fn weight_index(&self, out: usize, input: usize, ky: usize, kx: usize) -> usize {
        ((out * self.in_maps + input) * self.kernel + ky) * self.kernel + kx
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < self.kernel || pw < self.kernel {
            return Err(Error::shape("spiking conv", format!("kernel {} over {h}x{w} input", self.kernel)));
        }
        Ok((ph - self.kernel + 1, pw - self.kernel + 1))
    }

    /// Mean of `w (1 - w)` over all weights; zero once every weight has
    /// settled at a bound.
    pub fn convergence(&self) -> f64 {
        self.weights.iter().map(|&w| (w as f64) * (1.0 - w as f64)).sum::<f64>() / self.weights.len() as f64
    }

    /// Event-driven simulation. Each input spike adds its kernel column to
    /// the potentials it reaches; after every time step each neuron whose
    /// potential reached `threshold` emits its only spike and is frozen.
    /// With an infinite threshold nothing fires and the potentials are the
    /// full temporal sums.
    pub fn forward(&self, input: &SpikeWave, threshold: f32) -> Result<SpikeWave> {
        if input.channels() != self.in_maps {
            return Err(Error::DimensionMismatch {
                expected: self.in_maps,
                actual: input.channels(),
            });
        }
        let (h, w) = (input.height(), input.width());
        let (oh, ow) = self.output_size(h, w)?;
        let steps = input.steps();
        let plane = oh * ow;
        let mut potentials = vec![0.0f32; self.out_maps * plane];
        let mut times = vec![NO_SPIKE; self.out_maps * plane];
        let fires = threshold.is_finite();
        let k = self.kernel;
        let p = self.padding;

        for (t, events) in input.events_by_step().iter().enumerate() {
            for &flat in events {
                let (c, y, x) = (flat / (h * w), (flat / w) % h, flat % w);
                // Output (oy, ox) sees input (oy + ky - p, ox + kx - p).
                for ky in 0..k {
                    let Some(oy) = (y + p).checked_sub(ky).filter(|&v| v < oh) else { continue };
                    for kx in 0..k {
                        let Some(ox) = (x + p).checked_sub(kx).filter(|&v| v < ow) else { continue };
                        let pos = oy * ow + ox;
                        for o in 0..self.out_maps {
                            let n = o * plane + pos;
                            if times[n] == NO_SPIKE {
                                potentials[n] += self.weights[self.weight_index(o, c, ky, kx)];
                            }
                        }
                    }
                }
            }
            if fires && !events.is_empty() {
                for (tm, &v) in times.iter_mut().zip(&potentials) {
                    if *tm == NO_SPIKE && v >= threshold {
                        *tm = t as u8;
                    }
                }
            }
        }
        SpikeWave::from_parts(self.out_maps, oh, ow, steps, times, potentials)
    }
}

/// `floor((n + 2 pad - k) / stride) + 1`.
pub fn pooled_size(n: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::invalid("pool", "kernel and stride must be >= 1"));
    }
    (n + 2 * pad)
        .checked_sub(kernel)
        .map(|s| s / stride + 1)
        .ok_or_else(|| Error::shape("pool", format!("window {kernel} over {n} cells")))
}

/// Per-map pooling: the output spike time of a window is its earliest
/// input spike, the output potential its largest potential. Padding cells
/// never spike.
pub fn spike_pool(input: &SpikeWave, kernel: usize, stride: usize, pad: usize) -> Result<SpikeWave> {
    let (c, h, w) = (input.channels(), input.height(), input.width());
    let oh = pooled_size(h, kernel, stride, pad)?;
    let ow = pooled_size(w, kernel, stride, pad)?;
    let mut times = vec![NO_SPIKE; c * oh * ow];
    let mut pots = vec![0.0f32; c * oh * ow];
    let (tin, pin) = (input.times(), input.potentials());
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (ch * oh + oy) * ow + ox;
                for ky in 0..kernel {
                    let Some(y) = (oy * stride + ky).checked_sub(pad).filter(|&v| v < h) else { continue };
                    for kx in 0..kernel {
                        let Some(x) = (ox * stride + kx).checked_sub(pad).filter(|&v| v < w) else { continue };
                        let i = (ch * h + y) * w + x;
                        times[o] = times[o].min(tin[i]);
                        pots[o] = pots[o].max(pin[i]);
                    }
                }
            }
        }
    }
    SpikeWave::from_parts(c, oh, ow, input.steps(), times, pots)
}

/// Keeps, at every position, only the earliest spike across maps (ties:
/// highest potential, then lowest map). Potentials of silenced neurons
/// become 0.
pub fn pointwise_inhibition(input: &SpikeWave) -> Result<SpikeWave> {
    let (c, plane) = (input.channels(), input.height() * input.width());
    let mut times = vec![NO_SPIKE; c * plane];
    let mut pots = vec![0.0f32; c * plane];
    let (tin, pin) = (input.times(), input.potentials());
    for pos in 0..plane {
        let mut best: Option<usize> = None;
        for ch in 0..c {
            let i = ch * plane + pos;
            if tin[i] == NO_SPIKE {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => tin[i] < tin[b] || (tin[i] == tin[b] && pin[i] > pin[b]),
            };
            if better {
                best = Some(i);
            }
        }
        if let Some(b) = best {
            times[b] = tin[b];
            pots[b] = pin[b];
        }
    }
    SpikeWave::from_parts(c, input.height(), input.width(), input.steps(), times, pots)
}
