//! Few-label neuron naming and test-time classification.
//!
//! Every labeling sample adds, to each neuron's accumulator for the sample's
//! class, the neuron's activity relative to the best matching unit. The
//! accumulators are then divided by the number of samples per class and each
//! neuron takes the class of its largest normalized accumulator.

#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::FeatureSet;
use crate::error::{Error, Result};
use crate::som::{squared_distance, SomGrid};
use crate::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NeuronLabel {
    Class(u8),
    Unlabeled,
}

impl NeuronLabel {
    pub fn class(self) -> Option<u8> {
        match self {
            NeuronLabel::Class(c) => Some(c),
            NeuronLabel::Unlabeled => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccumulators {
    sums: Vec<[f64; NUM_CLASSES]>,
    counts: [usize; NUM_CLASSES],
}

impl ClassAccumulators {
    pub fn new(neurons: usize) -> Self {
        ClassAccumulators {
            sums: vec![[0.0; NUM_CLASSES]; neurons],
            counts: [0; NUM_CLASSES],
        }
    }

    pub fn neurons(&self) -> usize {
        self.sums.len()
    }

    /// Accumulated relative activity of neuron `n`, per class.
    pub fn sums(&self, n: usize) -> &[f64; NUM_CLASSES] {
        &self.sums[n]
    }

    pub fn counts(&self) -> &[usize; NUM_CLASSES] {
        &self.counts
    }

    pub fn total_samples(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Adds one labeled sample.
    ///
    /// The ratio `a_n / a_bmu` is evaluated as `exp((d_bmu - d_n) / alpha)`,
    /// which stays representable when both activities underflow.
    pub fn accumulate(&mut self, grid: &SomGrid, v: &[f32], class: u8, alpha: f64) -> Result<()> {
        if class as usize >= NUM_CLASSES {
            return Err(Error::ClassOutOfRange {
                class: class as usize,
                classes: NUM_CLASSES,
            });
        }
        if !(alpha > 0.0) {
            return Err(Error::invalid("alpha", "must be > 0"));
        }
        if self.sums.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: self.sums.len(),
            });
        }
        if v.len() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                actual: v.len(),
            });
        }
        let dists: Vec<f64> = (0..grid.len())
            .map(|n| euclidean(v, grid.weight(n)))
            .collect();
        let d_bmu = dists[argmin(&dists)];
        for (acc, &d) in self.sums.iter_mut().zip(&dists) {
            acc[class as usize] += ((d_bmu - d) / alpha).exp();
        }
        self.counts[class as usize] += 1;
        Ok(())
    }

    pub fn accumulate_all(&mut self, grid: &SomGrid, samples: &FeatureSet, alpha: f64) -> Result<()> {
        for (v, c) in samples.iter() {
            self.accumulate(grid, v, c, alpha)?;
        }
        Ok(())
    }

    /// Normalizes by per-class sample counts and picks the arg-max class.
    ///
    /// Classes without samples are skipped; ties go to the lowest class id;
    /// neurons whose accumulators are all zero stay unlabeled.
    pub fn assign_labels(&self) -> Result<Vec<NeuronLabel>> {
        if self.total_samples() == 0 {
            return Err(Error::Empty("labeling samples"));
        }
        Ok(self
            .sums
            .iter()
            .map(|acc| {
                let mut best: Option<(u8, f64)> = None;
                for c in 0..NUM_CLASSES {
                    if self.counts[c] == 0 || acc[c] <= 0.0 {
                        continue;
                    }
                    let score = acc[c] / self.counts[c] as f64;
                    if best.is_none_or(|(_, b)| score > b) {
                        best = Some((c as u8, score));
                    }
                }
                best.map_or(NeuronLabel::Unlabeled, |(c, _)| NeuronLabel::Class(c))
            })
            .collect())
    }
}

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Runs the whole labeling procedure over `samples`.
pub fn label_neurons(grid: &SomGrid, samples: &FeatureSet, alpha: f64) -> Result<Vec<NeuronLabel>> {
    let mut acc = ClassAccumulators::new(grid.len());
    acc.accumulate_all(grid, samples, alpha)?;
    acc.assign_labels()
}

/// Class of the nearest labeled neuron; unlabeled neurons never win.
pub fn classify(grid: &SomGrid, labels: &[NeuronLabel], v: &[f32]) -> Result<u8> {
    if labels.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            actual: labels.len(),
        });
    }
    if v.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            actual: v.len(),
        });
    }
    let mut best: Option<(u8, f32)> = None;
    for (n, label) in labels.iter().enumerate() {
        let NeuronLabel::Class(c) = *label else {
            continue;
        };
        let d = squared_distance(v, grid.weight(n));
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((c, d));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::NoLabeledNeuron)
}

/// Fraction of `test` vectors whose predicted class equals their label.
pub fn evaluate(grid: &SomGrid, labels: &[NeuronLabel], test: &FeatureSet) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut correct = 0usize;
    for (v, c) in test.iter() {
        if classify(grid, labels, v)? == c {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Confusion counts `[true][predicted]`.
pub fn confusion(grid: &SomGrid, labels: &[NeuronLabel], test: &FeatureSet) -> Result<[[usize; NUM_CLASSES]; NUM_CLASSES]> {
    let mut m = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (v, c) in test.iter() {
        m[c as usize][classify(grid, labels, v)? as usize] += 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(weights: &[f32], dim: usize) -> SomGrid {
        SomGrid::from_weights(weights.len() / dim, 1, dim, weights.to_vec(), 0).unwrap()
    }

    #[test]
    fn bmu_contributes_one() {
        let g = grid(&[0.1, 0.2, 0.9, 0.9], 2);
        let mut acc = ClassAccumulators::new(2);
        acc.accumulate(&g, &[0.1, 0.2], 4, 1.0).unwrap();
        assert_eq!(acc.sums(0)[4], 1.0);
        assert!(acc.sums(1)[4] < 1.0);
        assert_eq!(acc.counts()[4], 1);
    }

    #[test]
    fn tied_neurons_both_get_one() {
        let g = grid(&[0.0, 1.0, 2.0, 1.0], 2);
        let mut acc = ClassAccumulators::new(2);
        acc.accumulate(&g, &[1.0, 1.0], 2, 1.0).unwrap();
        assert_eq!(acc.sums(0)[2], 1.0);
        assert_eq!(acc.sums(1)[2], 1.0);
    }

    #[test]
    fn three_neuron_ratios_match_direct_evaluation() {
        let w = [0.0f32, 0.0, 1.0, 0.0, 0.0, 2.0];
        let g = grid(&w, 2);
        let v = [0.2f32, 0.1];
        let mut acc = ClassAccumulators::new(3);
        acc.accumulate(&g, &v, 0, 1.0).unwrap();
        // a_n / a_s with a_n = exp(-d_n) evaluated neuron by neuron.
        let d = |x: f64, y: f64| ((x - 0.2f32 as f64).powi(2) + (y - 0.1f32 as f64).powi(2)).sqrt();
        let a = [(-d(0.0, 0.0)).exp(), (-d(1.0, 0.0)).exp(), (-d(0.0, 2.0)).exp()];
        for n in 0..3 {
            assert_relative_eq!(acc.sums(n)[0], a[n] / a[0], max_relative = 1e-12);
        }
    }

    #[test]
    fn ratio_survives_underflow() {
        // Both activities are exp(-2000) and exp(-2001): zero in f64, but the
        // ratio is exp(-1).
        let g = grid(&[2000.0, 2001.0], 1);
        let mut acc = ClassAccumulators::new(2);
        acc.accumulate(&g, &[0.0], 1, 1.0).unwrap();
        assert_eq!(acc.sums(0)[1], 1.0);
        assert_relative_eq!(acc.sums(1)[1], (-1.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn single_class_support() {
        let g = grid(&[0.0, 5.0], 1);
        let mut acc = ClassAccumulators::new(2);
        acc.accumulate(&g, &[0.0], 3, 1.0).unwrap();
        acc.accumulate(&g, &[0.1], 3, 1.0).unwrap();
        let labels = acc.assign_labels().unwrap();
        assert_eq!(labels, vec![NeuronLabel::Class(3), NeuronLabel::Class(3)]);
    }

    #[test]
    fn per_class_normalization_favors_minority() {
        let mut acc = ClassAccumulators::new(1);
        acc.sums[0][0] = 1.0;
        acc.sums[0][1] = 0.2;
        acc.counts[0] = 10;
        acc.counts[1] = 1;
        assert_eq!(acc.assign_labels().unwrap(), vec![NeuronLabel::Class(1)]);
    }

    #[test]
    fn label_ties_go_to_lowest_class_and_zero_stays_unlabeled() {
        let mut acc = ClassAccumulators::new(2);
        acc.sums[0][2] = 0.5;
        acc.sums[0][7] = 0.5;
        acc.counts[2] = 1;
        acc.counts[7] = 1;
        assert_eq!(
            acc.assign_labels().unwrap(),
            vec![NeuronLabel::Class(2), NeuronLabel::Unlabeled]
        );
    }

    #[test]
    fn no_samples_is_an_error() {
        assert_eq!(
            ClassAccumulators::new(3).assign_labels(),
            Err(Error::Empty("labeling samples"))
        );
    }

    #[test]
    fn classify_examples() {
        let g = grid(&[0.0, 0.0, 1.0, 1.0, 3.0, 3.0], 2);
        let labels = [NeuronLabel::Class(7), NeuronLabel::Unlabeled, NeuronLabel::Class(2)];
        assert_eq!(classify(&g, &labels, &[0.0, 0.0]).unwrap(), 7);
        // Nearest neuron (index 1) is unlabeled; next nearest is index 2.
        assert_eq!(classify(&g, &labels, &[1.9, 1.9]).unwrap(), 2);
        assert_eq!(
            classify(&g, &[NeuronLabel::Unlabeled; 3], &[0.0, 0.0]),
            Err(Error::NoLabeledNeuron)
        );
    }

    #[test]
    fn evaluate_examples() {
        let g = grid(&[0.0, 1.0], 1);
        let right = [NeuronLabel::Class(0), NeuronLabel::Class(1)];
        let wrong = [NeuronLabel::Class(1), NeuronLabel::Class(0)];
        let test = FeatureSet::new(1, vec![0.1, 0.9], vec![0, 1]).unwrap();
        assert_eq!(evaluate(&g, &right, &test).unwrap(), 1.0);
        assert_eq!(evaluate(&g, &wrong, &test).unwrap(), 0.0);
        let empty = FeatureSet::new(1, vec![], vec![]).unwrap();
        assert_eq!(evaluate(&g, &right, &empty), Err(Error::Empty("test set")));
    }
}
