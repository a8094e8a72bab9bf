//! Post-labeled unsupervised image classification.
//!
//! A self-organizing map is trained on feature vectors without labels, then
//! a small labeled subset assigns a class to each neuron. Features come from
//! raw pixels, a sparse convolutional autoencoder, a supervised CNN trunk, or
//! an STDP-trained spiking convolutional network.
//!
//! The crate is `no_std` with `alloc`. The `std` feature (on by default)
//! enables runtime CPU feature detection in the matrix kernels and the
//! standard `Error` impls.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod labeling;
pub mod nn;
pub mod scae;
pub mod scalar;
pub mod seed;
pub mod snn;
pub mod som;
pub mod tensor;

pub use dataset::{FeatureSet, ImageSet, LabeledDataset, Split, SubsetSpec};
pub use error::{Error, Result};
pub use labeling::{ClassAccumulators, NeuronLabel};
pub use scalar::Scalar;
pub use som::{SomGrid, SomHyperParams};
pub use tensor::Tensor;

/// Number of digit classes.
pub const NUM_CLASSES: usize = 10;
