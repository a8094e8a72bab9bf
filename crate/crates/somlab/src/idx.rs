//! MNIST IDX containers: big-endian `u32` header fields followed by raw
//! unsigned bytes.

use std::fs;
use std::path::{Path, PathBuf};

use somlab_core::{LabeledDataset, Split};
use thiserror::Error;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file: need {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error(transparent)]
    Dataset(#[from] somlab_core::Error),
}

fn header(bytes: &[u8], fields: usize) -> Result<Vec<usize>, IdxError> {
    let need = 4 * fields;
    if bytes.len() < need {
        return Err(IdxError::Truncated {
            expected: need,
            actual: bytes.len(),
        });
    }
    Ok(bytes[..need]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect())
}

fn check_magic(found: usize, expected: u32) -> Result<(), IdxError> {
    if found as u32 != expected {
        return Err(IdxError::BadMagic {
            expected,
            found: found as u32,
        });
    }
    Ok(())
}

fn payload(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8], IdxError> {
    let expected = offset + len;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(&bytes[offset..expected])
}

/// Parsed image file.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// Pixels divided by 255.
    pub pixels: Vec<f32>,
}

impl IdxImages {
    pub fn len(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let h = header(bytes, 1)?;
    check_magic(h[0], IMAGES_MAGIC)?;
    let h = header(bytes, 4)?;
    let (count, rows, cols) = (h[1], h[2], h[3]);
    let data = payload(bytes, 16, count * rows * cols)?;
    Ok(IdxImages {
        rows,
        cols,
        pixels: data.iter().map(|&b| b as f32 / 255.0).collect(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let h = header(bytes, 1)?;
    check_magic(h[0], LABELS_MAGIC)?;
    let h = header(bytes, 2)?;
    Ok(payload(bytes, 8, h[1])?.to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a matching pair of image and label files.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<LabeledDataset, IdxError> {
    let images = parse_images(&read(images_path)?)?;
    let labels = parse_labels(&read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(LabeledDataset::new(images.rows, images.cols, images.pixels, labels, split)?)
}

/// Encodes images (pixels in `[0, 1]`, rounded to bytes) as an IDX file.
pub fn encode_images(rows: usize, cols: usize, pixels: &[f32]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(pixels.iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Standard MNIST file names inside one directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MnistFiles {
    pub dir: PathBuf,
}

impl MnistFiles {
    pub const TRAIN_IMAGES: &'static str = "train-images-idx3-ubyte";
    pub const TRAIN_LABELS: &'static str = "train-labels-idx1-ubyte";
    pub const TEST_IMAGES: &'static str = "t10k-images-idx3-ubyte";
    pub const TEST_LABELS: &'static str = "t10k-labels-idx1-ubyte";

    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MnistFiles { dir: dir.into() }
    }

    /// `$SOMLAB_MNIST_DIR`, else `data/mnist` under the workspace root.
    pub fn locate() -> Self {
        match std::env::var_os("SOMLAB_MNIST_DIR") {
            Some(dir) => Self::new(dir),
            None => Self::new(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")),
        }
    }

    pub fn exists(&self) -> bool {
        [Self::TRAIN_IMAGES, Self::TRAIN_LABELS, Self::TEST_IMAGES, Self::TEST_LABELS]
            .iter()
            .all(|f| self.dir.join(f).is_file())
    }

    pub fn load(&self, split: Split) -> Result<LabeledDataset, IdxError> {
        let (i, l) = match split {
            Split::Train => (Self::TRAIN_IMAGES, Self::TRAIN_LABELS),
            Split::Test => (Self::TEST_IMAGES, Self::TEST_LABELS),
        };
        load_idx(&self.dir.join(i), &self.dir.join(l), split)
    }
}
