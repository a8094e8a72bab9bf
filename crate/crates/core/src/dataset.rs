//! In-memory labeled image data and the labeled-subset sampler.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::seed;
use crate::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Test,
}

/// Grayscale images with pixels in `[0, 1]` and class labels in `0..10`.
///
/// Images are stored contiguously, row-major, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    rows: usize,
    cols: usize,
    pixels: Vec<f32>,
    labels: Vec<u8>,
    split: Split,
}

impl LabeledDataset {
    pub fn new(
        rows: usize,
        cols: usize,
        pixels: Vec<f32>,
        labels: Vec<u8>,
        split: Split,
    ) -> Result<Self> {
        let size = rows * cols;
        if size == 0 || pixels.len() != size * labels.len() {
            return Err(Error::shape(
                "dataset",
                format!(
                    "{} pixels for {} images of {rows}x{cols}",
                    pixels.len(),
                    labels.len()
                ),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::ClassOutOfRange {
                class: bad as usize,
                classes: NUM_CLASSES,
            });
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("pixels", "outside [0, 1]"));
        }
        Ok(LabeledDataset {
            rows,
            cols,
            pixels,
            labels,
            split,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn image_size(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn split(&self) -> Split {
        self.split
    }

    #[inline]
    pub fn image(&self, i: usize) -> &[f32] {
        let size = self.image_size();
        &self.pixels[i * size..(i + 1) * size]
    }

    #[inline]
    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// The first `n` items (or all of them).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        LabeledDataset {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..n * self.image_size()].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let size = self.image_size();
        let mut pixels = Vec::with_capacity(indices.len() * size);
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        LabeledDataset {
            rows: self.rows,
            cols: self.cols,
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }

    /// The images without their labels.
    pub fn images(&self) -> ImageSet<'_> {
        ImageSet {
            rows: self.rows,
            cols: self.cols,
            pixels: &self.pixels,
        }
    }

    /// Raw pixels as `rows*cols`-dimensional feature vectors.
    pub fn to_features(&self) -> FeatureSet {
        FeatureSet {
            dim: self.image_size(),
            data: self.pixels.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// Borrowed unlabeled images, the only input the unsupervised extractors see.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSet<'a> {
    rows: usize,
    cols: usize,
    pixels: &'a [f32],
}

impl<'a> ImageSet<'a> {
    pub fn new(rows: usize, cols: usize, pixels: &'a [f32]) -> Result<Self> {
        let size = rows * cols;
        if size == 0 || pixels.len() % size != 0 {
            return Err(Error::shape(
                "images",
                format!("{} pixels are not a whole number of {rows}x{cols} images", pixels.len()),
            ));
        }
        Ok(ImageSet { rows, cols, pixels })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn image(&self, i: usize) -> &'a [f32] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }

    pub fn pixels(&self) -> &'a [f32] {
        self.pixels
    }

    /// The first `n` images (or all of them).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        ImageSet {
            pixels: &self.pixels[..n * self.rows * self.cols],
            ..*self
        }
    }
}

/// `n` feature vectors of dimension `dim`, each with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    data: Vec<f32>,
    labels: Vec<u8>,
}

impl FeatureSet {
    pub fn new(dim: usize, data: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        if dim == 0 || data.len() != dim * labels.len() {
            return Err(Error::shape(
                "features",
                format!("{} values for {} vectors of dim {dim}", data.len(), labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::ClassOutOfRange {
                class: bad as usize,
                classes: NUM_CLASSES,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(FeatureSet { dim, data, labels })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f32], u8)> + '_ {
        self.data
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.vector(i));
        }
        FeatureSet {
            dim: self.dim,
            data,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        FeatureSet {
            dim: self.dim,
            data: self.data[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Per-dimension `(min, max)` over all vectors.
    pub fn column_ranges(&self) -> Vec<(f32, f32)> {
        let mut ranges = alloc::vec![(f32::INFINITY, f32::NEG_INFINITY); self.dim];
        for v in self.data.chunks_exact(self.dim) {
            for (r, &x) in ranges.iter_mut().zip(v) {
                r.0 = r.0.min(x);
                r.1 = r.1.max(x);
            }
        }
        ranges
    }

    /// Rescales each dimension with `(x - min) / (max - min)`; constant
    /// dimensions map to 0. Pass the ranges of the training set to apply the
    /// same transform to test data.
    pub fn min_max_normalized(&self, ranges: &[(f32, f32)]) -> Result<Self> {
        if ranges.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: ranges.len(),
            });
        }
        let mut data = self.data.clone();
        for v in data.chunks_exact_mut(self.dim) {
            for (x, &(lo, hi)) in v.iter_mut().zip(ranges) {
                let span = hi - lo;
                *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
            }
        }
        Ok(FeatureSet {
            dim: self.dim,
            data,
            labels: self.labels.clone(),
        })
    }
}

/// How to draw the labeled subset used to name the neurons.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubsetSpec {
    pub fraction: f64,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub stratified: bool,
}

impl SubsetSpec {
    pub fn new(fraction: f64, seed: u64) -> Self {
        SubsetSpec {
            fraction,
            seed,
            stratified: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::invalid(
                "fraction",
                format!("{} not in (0, 1]", self.fraction),
            ));
        }
        Ok(())
    }

    /// `round(fraction * n)`.
    pub fn subset_size(&self, n: usize) -> usize {
        num_traits::Float::round(self.fraction * n as f64) as usize
    }
}

/// Indices of a subset of `labels.len()` items drawn without replacement.
///
/// Uniform sampling is the default. The stratified variant draws
/// `round(fraction * n_c)` items from every class `c`.
pub fn subset_indices(labels: &[u8], spec: &SubsetSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let n = labels.len();
    let mut rng = seed::rng(spec.seed);
    if !spec.stratified {
        let amount = spec.subset_size(n);
        return Ok(index::sample(&mut rng, n, amount).into_vec());
    }
    let mut by_class: Vec<Vec<usize>> = (0..NUM_CLASSES).map(|_| Vec::new()).collect();
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut out = Vec::new();
    for members in &by_class {
        let amount = spec.subset_size(members.len());
        out.extend(
            index::sample(&mut rng, members.len(), amount)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Draws a labeled subset of `ds` according to `spec`.
pub fn sample_subset(ds: &LabeledDataset, spec: &SubsetSpec) -> Result<LabeledDataset> {
    Ok(ds.select(&subset_indices(ds.labels(), spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy(n: usize) -> LabeledDataset {
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let pixels = (0..n * 4).map(|i| (i % 7) as f32 / 7.0).collect();
        LabeledDataset::new(2, 2, pixels, labels, Split::Train).unwrap()
    }

    #[test]
    fn rejects_bad_pixels_and_labels() {
        assert!(LabeledDataset::new(1, 1, vec![1.5], vec![0], Split::Test).is_err());
        assert!(matches!(
            LabeledDataset::new(1, 1, vec![0.5], vec![10], Split::Test),
            Err(Error::ClassOutOfRange { class: 10, .. })
        ));
        assert!(LabeledDataset::new(1, 1, vec![0.5, 0.5], vec![1], Split::Test).is_err());
    }

    #[test]
    fn full_fraction_is_a_permutation() {
        let ds = toy(50);
        let mut idx = subset_indices(ds.labels(), &SubsetSpec::new(1.0, 9)).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn one_percent_of_sixty_thousand_is_six_hundred() {
        let labels = vec![3u8; 60_000];
        let idx = subset_indices(&labels, &SubsetSpec::new(0.01, 1)).unwrap();
        assert_eq!(idx.len(), 600);
    }

    #[test]
    fn same_seed_same_subset() {
        let ds = toy(1000);
        let spec = SubsetSpec::new(0.05, 77);
        assert_eq!(
            subset_indices(ds.labels(), &spec).unwrap(),
            subset_indices(ds.labels(), &spec).unwrap()
        );
        let other = SubsetSpec::new(0.05, 78);
        assert_ne!(
            subset_indices(ds.labels(), &spec).unwrap(),
            subset_indices(ds.labels(), &other).unwrap()
        );
        let sub = sample_subset(&ds, &spec).unwrap();
        assert_eq!(sub.len(), 50);
    }

    #[test]
    fn fraction_out_of_range() {
        let labels = vec![0u8; 10];
        for f in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(subset_indices(&labels, &SubsetSpec::new(f, 0)).is_err());
        }
    }

    #[test]
    fn stratified_draws_per_class() {
        let ds = toy(1000);
        let spec = SubsetSpec {
            fraction: 0.1,
            seed: 5,
            stratified: true,
        };
        let idx = subset_indices(ds.labels(), &spec).unwrap();
        let mut counts = [0usize; 10];
        for &i in &idx {
            counts[ds.label(i) as usize] += 1;
        }
        assert_eq!(counts, [10; 10]);
    }

    #[test]
    fn min_max_uses_given_ranges() {
        let fs = FeatureSet::new(2, vec![0.0, 5.0, 2.0, 5.0], vec![0, 1]).unwrap();
        let r = fs.column_ranges();
        assert_eq!(r, vec![(0.0, 2.0), (5.0, 5.0)]);
        let n = fs.min_max_normalized(&r).unwrap();
        assert_eq!(n.data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn subset_size_and_uniqueness(n in 1usize..400, f in 0.001f64..=1.0, seed in any::<u64>()) {
                let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
                let spec = SubsetSpec::new(f, seed);
                let mut idx = subset_indices(&labels, &spec).unwrap();
                prop_assert_eq!(idx.len(), (f * n as f64).round() as usize);
                idx.sort_unstable();
                idx.dedup();
                prop_assert_eq!(idx.len(), (f * n as f64).round() as usize);
                prop_assert!(idx.iter().all(|&i| i < n));
            }
        }
    }
}
