#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use somlab::config::preset;
use somlab::idx::{encode_images, encode_labels, MnistFiles};
use somlab::ExperimentConfig;
use somlab_core::{seed, NUM_CLASSES};

/// Thick bars at a class-dependent angle with jittered centers.
pub fn strokes(n: usize, seed_value: u64) -> (Vec<f32>, Vec<u8>) {
    let mut rng = seed::rng(seed_value);
    let (mut px, mut labels) = (vec![0.0f32; n * 784], Vec::with_capacity(n));
    for i in 0..n {
        let c = rng.random_range(0..NUM_CLASSES);
        let angle = c as f32 * std::f32::consts::PI / NUM_CLASSES as f32;
        let (cy, cx) = (14.0 + rng.random_range(-1.0..1.0f32), 14.0 + rng.random_range(-1.0..1.0f32));
        for s in -9..=9 {
            let y = (cy + s as f32 * angle.sin()).round() as i64;
            let x = (cx + s as f32 * angle.cos()).round() as i64;
            for (dy, dx) in [(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)] {
                let (y, x) = (y + dy, x + dx);
                if (0..28).contains(&y) && (0..28).contains(&x) {
                    px[i * 784 + y as usize * 28 + x as usize] = 1.0;
                }
            }
        }
        labels.push(c as u8);
    }
    (px, labels)
}

/// Writes the four IDX files of a synthetic MNIST into `dir`.
pub fn write_mnist(dir: &Path, train: usize, test: usize) {
    for (n, s, images, labels) in [
        (train, 1, MnistFiles::TRAIN_IMAGES, MnistFiles::TRAIN_LABELS),
        (test, 2, MnistFiles::TEST_IMAGES, MnistFiles::TEST_LABELS),
    ] {
        let (px, lab) = strokes(n, s);
        std::fs::write(dir.join(images), encode_images(28, 28, &px)).unwrap();
        std::fs::write(dir.join(labels), encode_labels(&lab)).unwrap();
    }
}

/// Raw-pixel config over the synthetic data in `dir`.
pub fn tiny_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = preset("smoke").unwrap();
    cfg.name = "tiny".into();
    cfg.data.mnist_dir = Some(dir.to_path_buf());
    cfg.data.train_limit = None;
    cfg.data.test_limit = None;
    cfg.som.neurons = 16;
    cfg.som.hyper.epochs = 5;
    cfg.labels.fraction = 0.2;
    cfg.repetitions = 2;
    cfg
}

/// Autoencoder config with two code maps and one epoch.
pub fn tiny_scae_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = tiny_config(dir);
    cfg.name = "tiny-scae".into();
    cfg.extractor = preset("scae-desk").unwrap().extractor;
    if let somlab::ExtractorConfig::Scae { model, training } = &mut cfg.extractor {
        model.feature_maps = 2;
        training.epochs = 1;
        training.batch_size = 16;
    }
    cfg
}
