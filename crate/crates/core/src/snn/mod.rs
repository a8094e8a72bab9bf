//! Spiking convolutional feature extractor trained with STDP.
//!
//! Images are turned into single-spike latency codes by on/off
//! difference-of-Gaussians filters. Two integrate-and-fire convolution
//! layers with first-spike pooling follow. Training is local and layer by
//! layer: for each stimulus the earliest neurons win a k-WTA competition and
//! move their kernels toward the inputs that fired before them. Features
//! are the pooled potentials of the second layer run without firing.

pub mod encode;
pub mod layer;
pub mod stdp;

use alloc::vec::Vec;

use rand::seq::SliceRandom;

pub use encode::{dog_encode, DogConfig, DogFilter};
pub use layer::{pointwise_inhibition, spike_pool, SpikingConv};
pub use stdp::{select_winners, stdp_update, StdpConfig, Winner};

use crate::dataset::ImageSet;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Spike time of a neuron that never fires.
pub const NO_SPIKE: u8 = u8::MAX;

/// Activity of one layer for one stimulus: at most one spike time per
/// neuron and a non-negative potential (the value at the spike, or the
/// final value for silent neurons). Layout `[channel, y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeWave {
    channels: usize,
    height: usize,
    width: usize,
    steps: usize,
    times: Vec<u8>,
    potentials: Vec<f32>,
}

impl SpikeWave {
    pub fn from_parts(
        channels: usize,
        height: usize,
        width: usize,
        steps: usize,
        times: Vec<u8>,
        potentials: Vec<f32>,
    ) -> Result<Self> {
        let n = channels * height * width;
        if times.len() != n || potentials.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: times.len().max(potentials.len()),
            });
        }
        if steps == 0 || steps >= NO_SPIKE as usize || times.iter().any(|&t| t != NO_SPIKE && t as usize >= steps) {
            return Err(Error::invalid("spike times", "outside the time window"));
        }
        if potentials.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("potentials", "must be non-negative"));
        }
        Ok(SpikeWave {
            channels,
            height,
            width,
            steps,
            times,
            potentials,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn times(&self) -> &[u8] {
        &self.times
    }

    pub fn potentials(&self) -> &[f32] {
        &self.potentials
    }

    pub fn spike_time(&self, c: usize, y: usize, x: usize) -> Option<u8> {
        let t = self.times[(c * self.height + y) * self.width + x];
        (t != NO_SPIKE).then_some(t)
    }

    pub fn potential(&self, c: usize, y: usize, x: usize) -> f32 {
        self.potentials[(c * self.height + y) * self.width + x]
    }

    pub fn spike_count(&self) -> usize {
        self.times.iter().filter(|&&t| t != NO_SPIKE).count()
    }

    /// Flat neuron indices grouped by spike time.
    pub fn events_by_step(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.steps];
        for (i, &t) in self.times.iter().enumerate() {
            if t != NO_SPIKE {
                out[t as usize].push(i);
            }
        }
        out
    }

    /// Dense `[steps, channel, y, x]` tensor with a single 1 per spike.
    pub fn to_binary(&self) -> Vec<u8> {
        let n = self.times.len();
        let mut out = alloc::vec![0u8; self.steps * n];
        for (i, &t) in self.times.iter().enumerate() {
            if t != NO_SPIKE {
                out[t as usize * n + i] = 1;
            }
        }
        out
    }
}

/// One trainable spiking convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerSpec {
    pub maps: usize,
    pub kernel: usize,
    /// Zero border around the input: `kernel / 2` keeps the size.
    pub padding: usize,
    /// Firing threshold while this layer learns and while it feeds the next.
    pub threshold: f32,
    pub weight_mean: f64,
    pub weight_std: f64,
    pub stdp: StdpConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec { kernel: 2, stride: 2, pad: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SnnTopology {
    pub dog: DogConfig,
    pub conv1: LayerSpec,
    pub pool1: PoolSpec,
    pub conv2: LayerSpec,
    pub pool2: PoolSpec,
    /// One spike per position across maps: applied to conv1 before
    /// winner selection and to the pooled conv1 output fed to conv2.
    #[cfg_attr(feature = "serde", serde(default = "enabled"))]
    pub pointwise_inhibition: bool,
}

#[cfg(feature = "serde")]
fn enabled() -> bool {
    true
}

impl SnnTopology {
    /// `X` second-layer maps with the reference hyper-parameters.
    pub fn with_feature_maps(maps: usize) -> Self {
        SnnTopology {
            dog: DogConfig::default(),
            conv1: LayerSpec {
                maps: 64,
                kernel: 5,
                padding: 2,
                threshold: 15.0,
                weight_mean: 0.8,
                weight_std: 0.05,
                stdp: StdpConfig::default(),
            },
            pool1: PoolSpec::default(),
            conv2: LayerSpec {
                maps,
                kernel: 5,
                padding: 1,
                threshold: 10.0,
                weight_mean: 0.8,
                weight_std: 0.05,
                stdp: StdpConfig {
                    kwta: 8,
                    inhibition_radius: 1,
                    ..StdpConfig::default()
                },
            },
            pool2: PoolSpec::default(),
            pointwise_inhibition: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dog.validate()?;
        for l in [&self.conv1, &self.conv2] {
            l.stdp.validate()?;
            if !(l.threshold > 0.0) {
                return Err(Error::invalid("threshold", "must be > 0"));
            }
        }
        Ok(())
    }

    /// `(maps, side)` after every stage for a square input.
    pub fn feature_shape(&self, side: usize) -> Result<(usize, usize)> {
        let c1 = (side + 2 * self.conv1.padding)
            .checked_sub(self.conv1.kernel)
            .ok_or_else(|| Error::shape("snn", "conv1 kernel larger than input"))?
            + 1;
        let p1 = layer::pooled_size(c1, self.pool1.kernel, self.pool1.stride, self.pool1.pad)?;
        let c2 = (p1 + 2 * self.conv2.padding)
            .checked_sub(self.conv2.kernel)
            .ok_or_else(|| Error::shape("snn", "conv2 kernel larger than its input"))?
            + 1;
        let p2 = layer::pooled_size(c2, self.pool2.kernel, self.pool2.stride, self.pool2.pad)?;
        Ok((self.conv2.maps, p2))
    }

    /// `28x28x1-64c5-p2-Xc5-p2`.
    pub fn describe(&self, side: usize) -> alloc::string::String {
        alloc::format!(
            "{side}x{side}x{}-{}c{}-p{}-{}c{}-p{}",
            1,
            self.conv1.maps,
            self.conv1.kernel,
            self.pool1.kernel,
            self.conv2.maps,
            self.conv2.kernel,
            self.pool2.kernel
        )
    }
}

/// Convergence record of one trained layer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerReport {
    pub layer: usize,
    pub passes: usize,
    /// Mean `w (1 - w)` before training and after each pass.
    pub convergence: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnNetwork {
    topology: SnnTopology,
    pub conv1: SpikingConv,
    pub conv2: SpikingConv,
}

impl SnnNetwork {
    pub fn new(topology: SnnTopology, seed: u64) -> Result<Self> {
        topology.validate()?;
        let mut rng = seed::rng(seed::stream(seed, Stream::Extractor));
        let l1 = &topology.conv1;
        let conv1 = SpikingConv::new(topology.dog.filters.len(), l1.maps, l1.kernel, l1.padding, l1.weight_mean, l1.weight_std, &mut rng)?;
        let l2 = &topology.conv2;
        let conv2 = SpikingConv::new(l1.maps, l2.maps, l2.kernel, l2.padding, l2.weight_mean, l2.weight_std, &mut rng)?;
        Ok(SnnNetwork { topology, conv1, conv2 })
    }

    pub fn from_parts(topology: SnnTopology, conv1: SpikingConv, conv2: SpikingConv) -> Result<Self> {
        topology.validate()?;
        let fits = |c: &SpikingConv, l: &LayerSpec, inputs: usize| {
            c.in_maps() == inputs && c.out_maps() == l.maps && c.kernel() == l.kernel && c.padding() == l.padding
        };
        if !fits(&conv1, &topology.conv1, topology.dog.filters.len()) || !fits(&conv2, &topology.conv2, topology.conv1.maps) {
            return Err(Error::invalid("snn layers", "do not match the topology"));
        }
        Ok(SnnNetwork { topology, conv1, conv2 })
    }

    pub fn topology(&self) -> &SnnTopology {
        &self.topology
    }

    fn encode(&self, images: &ImageSet<'_>, i: usize) -> Result<SpikeWave> {
        dog_encode(images.image(i), images.rows(), images.cols(), &self.topology.dog)
    }

    fn first_stage(&self, input: &SpikeWave) -> Result<(SpikeWave, SpikeWave)> {
        let out = self.conv1.forward(input, self.topology.conv1.threshold)?;
        let p = self.topology.pool1;
        let pooled = spike_pool(&out, p.kernel, p.stride, p.pad)?;
        if self.topology.pointwise_inhibition {
            return Ok((out, pointwise_inhibition(&pooled)?));
        }
        Ok((out, pooled))
    }

    pub fn feature_len(&self, rows: usize) -> Result<usize> {
        let (maps, side) = self.topology.feature_shape(rows)?;
        Ok(maps * side * side)
    }

    /// Pooled final potentials of the second layer run at infinite
    /// threshold.
    pub fn features(&self, image: &[f32], rows: usize, cols: usize) -> Result<Vec<f32>> {
        let wave = dog_encode(image, rows, cols, &self.topology.dog)?;
        let (_, pooled) = self.first_stage(&wave)?;
        let readout = self.conv2.forward(&pooled, f32::INFINITY)?;
        let p = self.topology.pool2;
        Ok(spike_pool(&readout, p.kernel, p.stride, p.pad)?.potentials)
    }

    pub fn extract_features(&self, images: &ImageSet<'_>) -> Result<Vec<f32>> {
        if images.rows() != images.cols() {
            return Err(Error::shape("snn", alloc::format!("non-square {}x{} images", images.rows(), images.cols())));
        }
        let mut out = Vec::with_capacity(images.len() * self.feature_len(images.rows())?);
        for i in 0..images.len() {
            out.extend(self.features(images.image(i), images.rows(), images.cols())?);
        }
        Ok(out)
    }

    /// Trains one layer (`1` or `2`) with the other frozen. `observer`
    /// receives `(images seen, convergence)` after each pass.
    pub fn train_layer(
        &mut self,
        layer: usize,
        images: &ImageSet<'_>,
        seed: u64,
        mut observer: impl FnMut(usize, f64),
    ) -> Result<LayerReport> {
        let spec = match layer {
            1 => self.topology.conv1,
            2 => self.topology.conv2,
            _ => return Err(Error::invalid("layer", "must be 1 or 2")),
        };
        let cfg = spec.stdp;
        let mut rng = seed::rng(seed::derive(seed::stream(seed, Stream::Extractor), layer as u64));
        let metric = |net: &Self| if layer == 1 { net.conv1.convergence() } else { net.conv2.convergence() };
        let mut convergence = alloc::vec![metric(self)];
        let mut seen = 0;
        let mut order: Vec<usize> = (0..images.len()).collect();
        for _ in 0..cfg.max_passes {
            if *convergence.last().unwrap() < cfg.convergence_threshold {
                break;
            }
            order.shuffle(&mut rng);
            for &i in &order {
                let (a_plus, a_minus) = cfg.rates_at(seen);
                let wave = self.encode(images, i)?;
                if layer == 1 {
                    let mut out = self.conv1.forward(&wave, spec.threshold)?;
                    if self.topology.pointwise_inhibition {
                        out = pointwise_inhibition(&out)?;
                    }
                    let winners = select_winners(&out, cfg.kwta, cfg.inhibition_radius);
                    stdp_update(&mut self.conv1, &wave, &winners, a_plus, a_minus)?;
                } else {
                    let (_, pooled) = self.first_stage(&wave)?;
                    let out = self.conv2.forward(&pooled, spec.threshold)?;
                    let winners = select_winners(&out, cfg.kwta, cfg.inhibition_radius);
                    stdp_update(&mut self.conv2, &pooled, &winners, a_plus, a_minus)?;
                }
                seen += 1;
            }
            let c = metric(self);
            observer(seen, c);
            convergence.push(c);
        }
        let converged = *convergence.last().unwrap() < cfg.convergence_threshold;
        Ok(LayerReport {
            layer,
            passes: convergence.len() - 1,
            convergence,
            converged,
        })
    }
}

/// Fresh network trained layer by layer on unlabeled images. Failing to
/// converge within the pass budget is reported, not an error.
pub fn train_layerwise(
    topology: SnnTopology,
    images: &ImageSet<'_>,
    seed: u64,
    mut observer: impl FnMut(usize, usize, f64),
) -> Result<(SnnNetwork, Vec<LayerReport>)> {
    if images.is_empty() {
        return Err(Error::Empty("images"));
    }
    let mut net = SnnNetwork::new(topology, seed)?;
    let r1 = net.train_layer(1, images, seed, |n, c| observer(1, n, c))?;
    let r2 = net.train_layer(2, images, seed, |n, c| observer(2, n, c))?;
    Ok((net, alloc::vec![r1, r2]))
}
