//! Sparse convolutional autoencoder and the supervised CNN baseline.
//!
//! Both share the same feature trunk: two valid 5x5 convolutions with ReLU
//! (`1 -> 64 -> X` maps, `28 -> 24 -> 20`) followed by non-overlapping 5x5
//! max pooling, giving an `X x 4 x 4` code. The autoencoder mirrors the
//! trunk with nearest-neighbor up-sampling and two transposed convolutions
//! ending in a sigmoid; the baseline puts a softmax dense layer on the code.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{ImageSet, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::activation::{relu, relu_backward, sigmoid, sigmoid_backward};
use crate::nn::loss::{mse, predictions, softmax_cross_entropy};
use crate::nn::penalty::{add_l1_grad, add_l2_grad, l1_loss, l2_loss};
use crate::nn::{AdadeltaParams, Conv2d, Deconv2d, Dense, MaxPool2d, Padding, Param, Upsample};
use crate::scalar::Scalar;
use crate::seed::{self, Stream};
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

const KERNEL: usize = 5;
const HIDDEN_MAPS: usize = 64;
const POOL: usize = 5;
/// Input side length the trunk is built for.
pub const IMAGE_SIDE: usize = 28;
/// Side length of the code maps.
pub const CODE_SIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScaeConfig {
    /// Number of code maps `X`.
    pub feature_maps: usize,
    /// L2 rate on every convolution and transposed-convolution kernel.
    pub weight_decay: f64,
    /// L1 rate on the second convolution's activations.
    pub activity_decay: f64,
}

impl Default for ScaeConfig {
    fn default() -> Self {
        ScaeConfig {
            feature_maps: 32,
            weight_decay: 1e-4,
            activity_decay: 1e-4,
        }
    }
}

impl ScaeConfig {
    /// Same topology with both penalties disabled.
    pub fn plain(feature_maps: usize) -> Self {
        ScaeConfig {
            feature_maps,
            weight_decay: 0.0,
            activity_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_maps == 0 {
            return Err(Error::invalid("feature_maps", "must be >= 1"));
        }
        for (name, v) in [("weight_decay", self.weight_decay), ("activity_decay", self.activity_decay)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Mini-batch gradient training settings shared by both models.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdadeltaParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            optimizer: AdadeltaParams::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Components of one loss evaluation; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossTerms {
    pub reconstruction: f64,
    pub weight_penalty: f64,
    pub activity_penalty: f64,
    pub total: f64,
}

/// Mean loss terms over one epoch of training.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: LossTerms,
    /// Training accuracy over the epoch, for supervised models.
    pub accuracy: Option<f64>,
}

fn batch_tensor<T: Scalar>(images: &ImageSet<'_>, order: &[usize]) -> Tensor<T> {
    let size = images.rows() * images.cols();
    let mut data = Vec::with_capacity(order.len() * size);
    for &i in order {
        data.extend(images.image(i).iter().map(|&p| T::from_f64(p as f64)));
    }
    Tensor::from_vec(&[order.len(), 1, images.rows(), images.cols()], data).expect("batch shape")
}

fn check_images(images: &ImageSet<'_>) -> Result<()> {
    if images.rows() != IMAGE_SIDE || images.cols() != IMAGE_SIDE {
        return Err(Error::shape(
            "convnet input",
            format!("{}x{} images, expected {IMAGE_SIDE}x{IMAGE_SIDE}", images.rows(), images.cols()),
        ));
    }
    if images.is_empty() {
        return Err(Error::Empty("images"));
    }
    Ok(())
}

fn epoch_batches(n: usize, batch: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

/// Intermediate activations kept for the backward pass.
struct TrunkCache<T> {
    input: Tensor<T>,
    hidden: Tensor<T>,
    features: Tensor<T>,
    argmax: Vec<usize>,
    code: Tensor<T>,
}

/// The shared feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pool: MaxPool2d,
}

impl<T: Scalar> Encoder<T> {
    pub fn new(feature_maps: usize, rng: &mut impl Rng) -> Self {
        Encoder {
            conv1: Conv2d::new(1, HIDDEN_MAPS, KERNEL, Padding::Valid, rng),
            conv2: Conv2d::new(HIDDEN_MAPS, feature_maps, KERNEL, Padding::Valid, rng),
            pool: MaxPool2d::new(POOL, POOL),
        }
    }

    pub fn feature_maps(&self) -> usize {
        self.conv2.out_maps()
    }

    /// Length of one flattened code.
    pub fn code_len(&self) -> usize {
        self.feature_maps() * CODE_SIDE * CODE_SIDE
    }

    pub fn parameter_count(&self) -> usize {
        self.conv1.parameter_count() + self.conv2.parameter_count()
    }

    fn forward_cached(&self, input: Tensor<T>) -> Result<TrunkCache<T>> {
        let hidden = relu(&self.conv1.forward(&input)?);
        let features = relu(&self.conv2.forward(&hidden)?);
        let (code, argmax) = self.pool.forward(&features)?;
        Ok(TrunkCache {
            input,
            hidden,
            features,
            argmax,
            code,
        })
    }

    /// `grad_features` is the gradient on the post-ReLU conv2 output, on top
    /// of what flows back through the pooling.
    fn backward(&mut self, cache: &TrunkCache<T>, grad_code: &Tensor<T>, grad_features: Option<&[T]>) -> Result<()> {
        let mut g = self.pool.backward(cache.features.shape(), grad_code, &cache.argmax)?;
        if let Some(extra) = grad_features {
            for (g, &e) in g.data_mut().iter_mut().zip(extra) {
                *g += e;
            }
        }
        let g = relu_backward(&cache.features, &g);
        let g = self.conv2.backward(&cache.hidden, &g, true)?.expect("input gradient");
        let g = relu_backward(&cache.hidden, &g);
        self.conv1.backward(&cache.input, &g, false)?;
        Ok(())
    }

    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(batch.clone())?.code)
    }

    /// Flattened codes of every image, `code_len()` values each.
    pub fn encode(&self, images: &ImageSet<'_>) -> Result<Vec<f32>> {
        check_images(images)?;
        let mut out = Vec::with_capacity(images.len() * self.code_len());
        let all: Vec<usize> = (0..images.len()).collect();
        for chunk in all.chunks(128) {
            let code = self.forward(&batch_tensor(images, chunk))?;
            out.extend(code.data().iter().map(|v| v.as_f64() as f32));
        }
        Ok(out)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        let [a, b] = self.conv1.params_mut();
        let [c, d] = self.conv2.params_mut();
        [a, b, c, d].into_iter()
    }

    fn params(&self) -> [&Param<T>; 4] {
        [&self.conv1.weight, &self.conv1.bias, &self.conv2.weight, &self.conv2.bias]
    }
}

fn step_all<'a, T: Scalar + 'a>(params: impl Iterator<Item = &'a mut Param<T>>, hp: &AdadeltaParams) -> Result<()> {
    for p in params {
        p.step(hp)?;
    }
    Ok(())
}

fn zero_all<'a, T: Scalar + 'a>(params: impl Iterator<Item = &'a mut Param<T>>) {
    for p in params {
        p.zero_grad();
    }
}

fn load_into<'a, T: Scalar + 'a>(
    targets: impl Iterator<Item = &'a mut Param<T>>,
    sources: Vec<Param<T>>,
) -> Result<()> {
    let mut sources = sources.into_iter();
    for t in targets {
        let s = sources.next().ok_or(Error::Empty("parameters"))?;
        if s.value.shape() != t.value.shape() || s.state.sq_grad.len() != s.len() || s.state.sq_update.len() != s.len() {
            return Err(Error::shape(
                "load parameters",
                format!("{:?} into {:?}", s.value.shape(), t.value.shape()),
            ));
        }
        *t = s;
    }
    if sources.next().is_some() {
        return Err(Error::invalid("parameters", "more tensors than the topology has"));
    }
    Ok(())
}

/// The autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaeModel<T> {
    config: ScaeConfig,
    pub encoder: Encoder<T>,
    upsample: Upsample,
    pub deconv1: Deconv2d<T>,
    pub deconv2: Deconv2d<T>,
}

struct DecoderCache<T> {
    upsampled: Tensor<T>,
    hidden: Tensor<T>,
    output: Tensor<T>,
}

impl<T: Scalar> ScaeModel<T> {
    pub fn new(config: ScaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::stream(seed, Stream::Extractor));
        let x = config.feature_maps;
        let encoder = Encoder::new(x, &mut rng);
        Ok(ScaeModel {
            config,
            encoder,
            upsample: Upsample { factor: POOL },
            deconv1: Deconv2d::new(x, HIDDEN_MAPS, KERNEL, Padding::Valid, &mut rng),
            deconv2: Deconv2d::new(HIDDEN_MAPS, 1, KERNEL, Padding::Valid, &mut rng),
        })
    }

    pub fn config(&self) -> &ScaeConfig {
        &self.config
    }

    /// `28x28x1-64c5-Xc5-p5-u5-64d5-1d5`.
    pub fn topology(&self) -> String {
        format!(
            "{IMAGE_SIDE}x{IMAGE_SIDE}x1-{HIDDEN_MAPS}c{KERNEL}-{}c{KERNEL}-p{POOL}-u{POOL}-{HIDDEN_MAPS}d{KERNEL}-1d{KERNEL}",
            self.config.feature_maps
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.deconv1.parameter_count() + self.deconv2.parameter_count()
    }

    fn decode_cached(&self, code: &Tensor<T>) -> Result<DecoderCache<T>> {
        let upsampled = self.upsample.forward(code)?;
        let hidden = relu(&self.deconv1.forward(&upsampled)?);
        let output = sigmoid(&self.deconv2.forward(&hidden)?);
        Ok(DecoderCache {
            upsampled,
            hidden,
            output,
        })
    }

    /// Reconstructions `[n, 1, 28, 28]` of a `[n, 1, 28, 28]` batch.
    pub fn reconstruct(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.decode_cached(&self.encoder.forward(batch)?)?.output)
    }

    pub fn encode(&self, images: &ImageSet<'_>) -> Result<Vec<f32>> {
        self.encoder.encode(images)
    }

    fn kernels(&self) -> [&[T]; 4] {
        [
            self.encoder.conv1.weight.value.data(),
            self.encoder.conv2.weight.value.data(),
            self.deconv1.weight.value.data(),
            self.deconv2.weight.value.data(),
        ]
    }

    /// Loss of one batch; accumulates its gradient into the parameters.
    pub fn loss_and_grad(&mut self, batch: &Tensor<T>) -> Result<LossTerms> {
        let n = batch.shape()[0];
        let cache = self.encoder.forward_cached(batch.clone())?;
        let dec = self.decode_cached(&cache.code)?;
        let (rec, grad_out) = mse(&dec.output, batch.data())?;
        let lw = T::from_f64(self.config.weight_decay);
        // Activity penalty is summed over units and averaged over the batch.
        let la = T::from_f64(self.config.activity_decay / n as f64);

        let g = sigmoid_backward(&dec.output, &grad_out);
        let g = self.deconv2.backward(&dec.hidden, &g, true)?.expect("input gradient");
        let g = relu_backward(&dec.hidden, &g);
        let g = self.deconv1.backward(&dec.upsampled, &g, true)?.expect("input gradient");
        let g = self.upsample.backward(&g)?;
        let mut activity_grad = vec![T::zero(); cache.features.len()];
        add_l1_grad(cache.features.data(), &mut activity_grad, la);
        self.encoder.backward(&cache, &g, Some(&activity_grad))?;

        add_l2_grad(self.encoder.conv1.weight.value.data(), self.encoder.conv1.weight.grad.data_mut(), lw);
        add_l2_grad(self.encoder.conv2.weight.value.data(), self.encoder.conv2.weight.grad.data_mut(), lw);
        add_l2_grad(self.deconv1.weight.value.data(), self.deconv1.weight.grad.data_mut(), lw);
        add_l2_grad(self.deconv2.weight.value.data(), self.deconv2.weight.grad.data_mut(), lw);

        let weight_penalty: f64 = self.kernels().iter().map(|k| l2_loss(k, lw).as_f64()).sum();
        let activity_penalty = l1_loss(cache.features.data(), la).as_f64();
        let reconstruction = rec.as_f64();
        Ok(LossTerms {
            reconstruction,
            weight_penalty,
            activity_penalty,
            total: reconstruction + weight_penalty + activity_penalty,
        })
    }

    /// Mean reconstruction error over a set of images, without training.
    pub fn reconstruction_error(&self, images: &ImageSet<'_>) -> Result<f64> {
        check_images(images)?;
        let all: Vec<usize> = (0..images.len()).collect();
        let mut sum = 0.0;
        for chunk in all.chunks(128) {
            let batch = batch_tensor::<T>(images, chunk);
            let (l, _) = mse(&self.reconstruct(&batch)?, batch.data())?;
            sum += l.as_f64() * chunk.len() as f64;
        }
        Ok(sum / images.len() as f64)
    }

    /// Mean absolute code-layer activation (post-ReLU, pre-pooling).
    pub fn mean_activation(&self, images: &ImageSet<'_>) -> Result<f64> {
        check_images(images)?;
        let all: Vec<usize> = (0..images.len()).collect();
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in all.chunks(128) {
            let cache = self.encoder.forward_cached(batch_tensor(images, chunk))?;
            sum += cache.features.data().iter().map(|v| v.abs().as_f64()).sum::<f64>();
            count += cache.features.len();
        }
        Ok(sum / count as f64)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = self.encoder.params().into();
        v.extend([&self.deconv1.weight, &self.deconv1.bias, &self.deconv2.weight, &self.deconv2.bias]);
        v
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        let [a, b] = self.deconv1.params_mut();
        let [c, d] = self.deconv2.params_mut();
        self.encoder.params_mut().chain([a, b, c, d])
    }

    /// Replaces every parameter, in `params()` order.
    pub fn load_params(&mut self, params: Vec<Param<T>>) -> Result<()> {
        load_into(self.params_mut(), params)
    }
}

/// Trains the autoencoder on unlabeled images. `observer` sees each epoch's
/// mean loss as soon as it is known.
pub fn train_scae<T: Scalar>(
    model: &mut ScaeModel<T>,
    images: &ImageSet<'_>,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochLoss),
) -> Result<Vec<EpochLoss>> {
    config.validate()?;
    check_images(images)?;
    let mut rng = seed::rng(seed::stream(config.seed, Stream::Extractor) ^ 0x5cae);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut acc = LossTerms::default();
        for order in epoch_batches(images.len(), config.batch_size, &mut rng) {
            let batch = batch_tensor(images, &order);
            zero_all(model.params_mut());
            let terms = model.loss_and_grad(&batch)?;
            if !terms.total.is_finite() {
                return Err(Error::NonFinite("autoencoder loss"));
            }
            step_all(model.params_mut(), &config.optimizer)?;
            let w = order.len() as f64;
            acc.reconstruction += terms.reconstruction * w;
            acc.weight_penalty += terms.weight_penalty * w;
            acc.activity_penalty += terms.activity_penalty * w;
            acc.total += terms.total * w;
        }
        let n = images.len() as f64;
        let record = EpochLoss {
            epoch,
            loss: LossTerms {
                reconstruction: acc.reconstruction / n,
                weight_penalty: acc.weight_penalty / n,
                activity_penalty: acc.activity_penalty / n,
                total: acc.total / n,
            },
            accuracy: None,
        };
        observer(&record);
        history.push(record);
    }
    Ok(history)
}

/// Supervised baseline: the trunk followed by a softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnBaselineModel<T> {
    pub encoder: Encoder<T>,
    pub classifier: Dense<T>,
}

impl<T: Scalar> CnnBaselineModel<T> {
    pub fn new(feature_maps: usize, seed: u64) -> Result<Self> {
        if feature_maps == 0 {
            return Err(Error::invalid("feature_maps", "must be >= 1"));
        }
        let mut rng = seed::rng(seed::stream(seed, Stream::Extractor));
        let encoder = Encoder::new(feature_maps, &mut rng);
        let classifier = Dense::new(encoder.code_len(), NUM_CLASSES, &mut rng);
        Ok(CnnBaselineModel { encoder, classifier })
    }

    pub fn topology(&self) -> String {
        format!(
            "{IMAGE_SIDE}x{IMAGE_SIDE}x1-{HIDDEN_MAPS}c{KERNEL}-{}c{KERNEL}-p{POOL}-{NUM_CLASSES}",
            self.encoder.feature_maps()
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.classifier.parameter_count()
    }

    pub fn logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let code = self.encoder.forward(batch)?;
        let n = code.shape()[0];
        self.classifier.forward(&code.reshape(&[n, self.encoder.code_len()])?)
    }

    /// Mean cross-entropy of one batch; accumulates the gradient.
    pub fn loss_and_grad(&mut self, batch: &Tensor<T>, labels: &[u8]) -> Result<(f64, Vec<u8>)> {
        let cache = self.encoder.forward_cached(batch.clone())?;
        let n = batch.shape()[0];
        let flat = cache.code.clone().reshape(&[n, self.encoder.code_len()])?;
        let logits = self.classifier.forward(&flat)?;
        let (loss, g) = softmax_cross_entropy(&logits, labels)?;
        let g = self.classifier.backward(&flat, &g)?.reshape(cache.code.shape())?;
        self.encoder.backward(&cache, &g, None)?;
        Ok((loss.as_f64(), predictions(&logits)))
    }

    pub fn predict(&self, images: &ImageSet<'_>) -> Result<Vec<u8>> {
        check_images(images)?;
        let all: Vec<usize> = (0..images.len()).collect();
        let mut out = Vec::with_capacity(images.len());
        for chunk in all.chunks(128) {
            out.extend(predictions(&self.logits(&batch_tensor(images, chunk))?));
        }
        Ok(out)
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        let pred = self.predict(&data.images())?;
        let hits = pred.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / data.len() as f64)
    }

    /// Trunk codes, for feeding the map with supervised features.
    pub fn encode(&self, images: &ImageSet<'_>) -> Result<Vec<f32>> {
        self.encoder.encode(images)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = self.encoder.params().into();
        v.extend([&self.classifier.weight, &self.classifier.bias]);
        v
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        let [a, b] = self.classifier.params_mut();
        self.encoder.params_mut().chain([a, b])
    }

    pub fn load_params(&mut self, params: Vec<Param<T>>) -> Result<()> {
        load_into(self.params_mut(), params)
    }
}

/// Trains the baseline on a labeled set; each record carries the epoch's
/// training accuracy.
pub fn train_cnn_baseline<T: Scalar>(
    model: &mut CnnBaselineModel<T>,
    data: &LabeledDataset,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochLoss),
) -> Result<Vec<EpochLoss>> {
    config.validate()?;
    let images = data.images();
    check_images(&images)?;
    let mut rng = seed::rng(seed::stream(config.seed, Stream::Extractor) ^ 0xc22);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (mut loss, mut hits) = (0.0, 0usize);
        for order in epoch_batches(images.len(), config.batch_size, &mut rng) {
            let batch = batch_tensor(&images, &order);
            let labels: Vec<u8> = order.iter().map(|&i| data.label(i)).collect();
            zero_all(model.params_mut());
            let (l, pred) = model.loss_and_grad(&batch, &labels)?;
            if !l.is_finite() {
                return Err(Error::NonFinite("classifier loss"));
            }
            step_all(model.params_mut(), &config.optimizer)?;
            loss += l * order.len() as f64;
            hits += pred.iter().zip(&labels).filter(|(p, l)| p == l).count();
        }
        let n = images.len() as f64;
        let record = EpochLoss {
            epoch,
            loss: LossTerms {
                reconstruction: loss / n,
                total: loss / n,
                ..LossTerms::default()
            },
            accuracy: Some(hits as f64 / n),
        };
        observer(&record);
        history.push(record);
    }
    Ok(history)
}
