//! Contrast detection with difference-of-Gaussians filters and
//! intensity-to-latency coding.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::{SpikeWave, NO_SPIKE};
use crate::error::{Error, Result};

/// One on- or off-center filter: `(center sigma, surround sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DogFilter {
    pub sigma_center: f64,
    pub sigma_surround: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DogConfig {
    pub kernel: usize,
    pub filters: Vec<DogFilter>,
    /// Responses below this value never spike.
    pub threshold: f32,
    /// Pixels in `[0, 1]` are multiplied by this before filtering.
    pub input_scale: f32,
    pub time_steps: usize,
    /// Divides each response by its mean over a `(2r+1)²` window before
    /// latency coding.
    #[cfg_attr(feature = "serde", serde(default = "default_norm_radius"))]
    pub local_norm_radius: Option<usize>,
}

impl Default for DogConfig {
    fn default() -> Self {
        DogConfig {
            kernel: 7,
            filters: vec![
                DogFilter { sigma_center: 1.0, sigma_surround: 2.0 },
                DogFilter { sigma_center: 2.0, sigma_surround: 1.0 },
            ],
            threshold: 50.0,
            input_scale: 255.0,
            time_steps: 15,
            local_norm_radius: default_norm_radius(),
        }
    }
}

fn default_norm_radius() -> Option<usize> {
    Some(8)
}

impl DogConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 {
            return Err(Error::invalid("dog kernel", "must be odd"));
        }
        if self.filters.is_empty() {
            return Err(Error::Empty("dog filters"));
        }
        if self.time_steps == 0 || self.time_steps >= NO_SPIKE as usize {
            return Err(Error::invalid("time_steps", "must be in 1..255"));
        }
        Ok(())
    }
}

/// Zero-mean kernel normalized so its maximum is one. A positive center
/// with a wider negative surround for `sigma_center < sigma_surround`.
pub fn dog_kernel(size: usize, filter: DogFilter) -> Vec<f32> {
    let half = (size / 2) as f64;
    let gauss = |s: f64, r2: f64| (-0.5 * r2 / (s * s)).exp() / (s * s);
    let mut k: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64 - half, (i % size) as f64 - half);
            let r2 = x * x + y * y;
            (gauss(filter.sigma_center, r2) - gauss(filter.sigma_surround, r2)) / (2.0 * core::f64::consts::PI)
        })
        .collect();
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    let max = k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    k.into_iter().map(|v| (v / max) as f32).collect()
}

/// Same-padded filter responses of one image, `[filters, rows, cols]`,
/// with sub-threshold values set to zero.
pub fn dog_responses(image: &[f32], rows: usize, cols: usize, cfg: &DogConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    if image.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            actual: image.len(),
        });
    }
    let (k, half) = (cfg.kernel, cfg.kernel / 2);
    let mut out = vec![0.0f32; cfg.filters.len() * rows * cols];
    for (f, plane) in cfg.filters.iter().zip(out.chunks_exact_mut(rows * cols)) {
        let kernel = dog_kernel(k, *f);
        for y in 0..rows {
            for x in 0..cols {
                let mut acc = 0.0f32;
                for ky in 0..k {
                    let Some(iy) = (y + ky).checked_sub(half).filter(|&v| v < rows) else { continue };
                    for kx in 0..k {
                        let Some(ix) = (x + kx).checked_sub(half).filter(|&v| v < cols) else { continue };
                        acc += kernel[ky * k + kx] * image[iy * cols + ix] * cfg.input_scale;
                    }
                }
                plane[y * cols + x] = if acc >= cfg.threshold { acc } else { 0.0 };
            }
        }
    }
    Ok(out)
}

/// Rank-order latency code of non-negative intensities. The `n` positive
/// values sorted by decreasing magnitude (ties by index) get time bins
/// `floor(rank * steps / n)`; zeros never spike.
pub fn latency_bins(intensities: &[f32], steps: usize) -> Vec<u8> {
    let mut order: Vec<usize> = (0..intensities.len()).filter(|&i| intensities[i] > 0.0).collect();
    order.sort_by(|&a, &b| intensities[b].total_cmp(&intensities[a]).then(a.cmp(&b)));
    let n = order.len();
    let mut times = vec![NO_SPIKE; intensities.len()];
    for (rank, &i) in order.iter().enumerate() {
        times[i] = (rank * steps / n) as u8;
    }
    times
}

/// Each plane of `[planes, rows, cols]` divided by its zero-padded box
/// mean of radius `r`.
pub fn local_normalize(planes: &[f32], rows: usize, cols: usize, r: usize) -> Vec<f32> {
    let area = ((2 * r + 1) * (2 * r + 1)) as f32;
    let mut out = vec![0.0f32; planes.len()];
    for (src, dst) in planes.chunks_exact(rows * cols).zip(out.chunks_exact_mut(rows * cols)) {
        // Summed-area table with a zero first row and column.
        let w = cols + 1;
        let mut sat = vec![0.0f64; (rows + 1) * w];
        for y in 0..rows {
            for x in 0..cols {
                sat[(y + 1) * w + x + 1] = src[y * cols + x] as f64 + sat[y * w + x + 1] + sat[(y + 1) * w + x] - sat[y * w + x];
            }
        }
        for y in 0..rows {
            let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(rows));
            for x in 0..cols {
                let v = src[y * cols + x];
                if v <= 0.0 {
                    continue;
                }
                let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(cols));
                let sum = sat[y1 * w + x1] - sat[y0 * w + x1] - sat[y1 * w + x0] + sat[y0 * w + x0];
                dst[y * cols + x] = v / (sum as f32 / area + 1e-12);
            }
        }
    }
    out
}

/// Encodes one image in `[0, 1]` into a spike wave with one channel per
/// filter. Potentials hold the rectified filter responses.
pub fn dog_encode(image: &[f32], rows: usize, cols: usize, cfg: &DogConfig) -> Result<SpikeWave> {
    let responses = dog_responses(image, rows, cols, cfg)?;
    let times = match cfg.local_norm_radius {
        Some(r) => latency_bins(&local_normalize(&responses, rows, cols, r), cfg.time_steps),
        None => latency_bins(&responses, cfg.time_steps),
    };
    SpikeWave::from_parts(cfg.filters.len(), rows, cols, cfg.time_steps, times, responses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn kernel_is_zero_mean_with_unit_peak() {
        let on = dog_kernel(7, DogFilter { sigma_center: 1.0, sigma_surround: 2.0 });
        let off = dog_kernel(7, DogFilter { sigma_center: 2.0, sigma_surround: 1.0 });
        for k in [&on, &off] {
            assert!(k.iter().sum::<f32>().abs() < 1e-5);
            assert!((k.iter().copied().fold(f32::MIN, f32::max) - 1.0).abs() < 1e-6);
        }
        // The on-center peak is the center; the off-center one is not.
        assert_eq!(on[24], 1.0);
        assert!(off[24] < 0.0);
    }

    #[test]
    fn constant_image_has_no_spikes() {
        let wave = dog_encode(&[0.7; 784], 28, 28, &DogConfig::default()).unwrap();
        // Border pixels see zero padding, so compare the interior only.
        for c in 0..2 {
            for y in 3..25 {
                for x in 3..25 {
                    assert_eq!(wave.spike_time(c, y, x), None);
                }
            }
        }
        let blank = dog_encode(&[0.0; 784], 28, 28, &DogConfig::default()).unwrap();
        assert_eq!(blank.spike_count(), 0);
    }

    #[test]
    fn bright_pixel_spikes_first_at_its_position() {
        let mut img = vec![0.0f32; 784];
        img[14 * 28 + 9] = 1.0;
        let wave = dog_encode(&img, 28, 28, &DogConfig::default()).unwrap();
        assert_eq!(wave.spike_time(0, 14, 9), Some(0));
        let best = (0..784).max_by(|&a, &b| wave.potentials()[a].total_cmp(&wave.potentials()[b])).unwrap();
        assert_eq!(best, 14 * 28 + 9);
    }

    #[test]
    fn bins_match_sorted_ranks() {
        let mut rng = seed::rng(12);
        for _ in 0..20 {
            let img: Vec<f32> = (0..784).map(|_| if rng.random::<f32>() < 0.3 { rng.random() } else { 0.0 }).collect();
            let cfg = DogConfig::default();
            let resp = dog_responses(&img, 28, 28, &cfg).unwrap();
            let times = latency_bins(&resp, cfg.time_steps);
            // Brute force: the rank of a value is how many values beat it.
            let n = resp.iter().filter(|&&v| v > 0.0).count();
            for (i, &v) in resp.iter().enumerate() {
                if v > 0.0 {
                    let rank = resp
                        .iter()
                        .enumerate()
                        .filter(|&(j, &u)| u > v || (u == v && j < i))
                        .count();
                    assert_eq!(times[i] as usize, rank * cfg.time_steps / n);
                } else {
                    assert_eq!(times[i], NO_SPIKE);
                }
            }
        }
    }
}
