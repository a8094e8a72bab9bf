//! Kohonen self-organizing map with exponentially decaying schedules.
//!
//! Each neuron `n` sits at an integer grid position `p_n` and holds an
//! `m`-dimensional prototype `w_n`. For every input the winner is the
//! neuron of maximal activity `exp(-|v - w_n| / alpha)`, i.e. the nearest
//! prototype, and every prototype moves toward the input by
//! `eps * h(n, s)` where `h` is a Gaussian over grid distance to the winner.

#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SomHyperParams {
    pub eps_initial: f64,
    pub eps_final: f64,
    pub sigma_initial: f64,
    pub sigma_final: f64,
    /// Width of the activity kernel. It never changes the winner, only the
    /// labeling weights.
    pub alpha: f64,
    pub epochs: usize,
}

impl Default for SomHyperParams {
    fn default() -> Self {
        SomHyperParams {
            eps_initial: 1.0,
            eps_final: 0.01,
            sigma_initial: 10.0,
            sigma_final: 0.01,
            alpha: 1.0,
            epochs: 10,
        }
    }
}

impl SomHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_final > 0.0 && self.eps_initial >= self.eps_final) {
            return Err(Error::invalid(
                "eps",
                format!("need eps_initial >= eps_final > 0, got {} / {}", self.eps_initial, self.eps_final),
            ));
        }
        if !(self.sigma_final > 0.0 && self.sigma_initial >= self.sigma_final) {
            return Err(Error::invalid(
                "sigma",
                format!(
                    "need sigma_initial >= sigma_final > 0, got {} / {}",
                    self.sigma_initial, self.sigma_final
                ),
            ));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("alpha", "must be > 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        Ok(())
    }
}

/// A `width x height` lattice of prototypes, stored neuron-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SomGrid {
    width: usize,
    height: usize,
    dim: usize,
    weights: Vec<f32>,
    seed: u64,
}

/// Squarest `(width, height)` with `width * height == k` and `width >= height`.
pub fn squarest_shape(k: usize) -> (usize, usize) {
    let mut h = (k as f64).sqrt() as usize;
    while h > 1 && k % h != 0 {
        h -= 1;
    }
    let h = h.max(1);
    (k / h, h)
}

impl SomGrid {
    /// Prototypes drawn uniformly from `[0, 1)^dim`.
    pub fn new(width: usize, height: usize, dim: usize, seed: u64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Empty("som grid"));
        }
        if dim == 0 {
            return Err(Error::invalid("dim", "must be >= 1"));
        }
        let mut rng = seed::rng(seed::stream(seed, Stream::SomInit));
        let weights = (0..width * height * dim).map(|_| rng.random::<f32>()).collect();
        Ok(SomGrid {
            width,
            height,
            dim,
            weights,
            seed,
        })
    }

    pub fn with_neurons(k: usize, dim: usize, seed: u64) -> Result<Self> {
        let (w, h) = squarest_shape(k);
        Self::new(w, h, dim, seed)
    }

    pub fn from_weights(
        width: usize,
        height: usize,
        dim: usize,
        weights: Vec<f32>,
        seed: u64,
    ) -> Result<Self> {
        if width == 0 || height == 0 || dim == 0 {
            return Err(Error::Empty("som grid"));
        }
        if weights.len() != width * height * dim {
            return Err(Error::DimensionMismatch {
                expected: width * height * dim,
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("som weights"));
        }
        Ok(SomGrid {
            width,
            height,
            dim,
            weights,
            seed,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of neurons `k`.
    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Grid coordinates `(x, y)` of neuron `n`.
    #[inline]
    pub fn position(&self, n: usize) -> (usize, usize) {
        (n % self.width, n / self.width)
    }

    #[inline]
    pub fn weight(&self, n: usize) -> &[f32] {
        &self.weights[n * self.dim..(n + 1) * self.dim]
    }

    pub fn weight_mut(&mut self, n: usize) -> &mut [f32] {
        &mut self.weights[n * self.dim..(n + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    fn check_dim(&self, v: &[f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// Squared Euclidean distance from `v` to every prototype.
    pub fn squared_distances(&self, v: &[f32], out: &mut [f32]) -> Result<()> {
        self.check_dim(v)?;
        for (d, w) in out.iter_mut().zip(self.weights.chunks_exact(self.dim)) {
            *d = squared_distance(v, w);
        }
        Ok(())
    }

    /// Activities `exp(-|v - w_n| / alpha)` of all neurons.
    pub fn activities(&self, v: &[f32], alpha: f64) -> Result<Vec<f64>> {
        self.check_dim(v)?;
        (0..self.len())
            .map(|n| activity(v, self.weight(n), alpha))
            .collect()
    }

    /// Best matching unit: nearest prototype, lowest index on ties.
    pub fn best_matching_unit(&self, v: &[f32]) -> Result<usize> {
        self.check_dim(v)?;
        Ok(nearest(&self.weights, self.dim, v))
    }
}

/// `sum (a_i - b_i)^2`, accumulated in eight independent lanes.
#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn nearest(weights: &[f32], dim: usize, v: &[f32]) -> usize {
    let mut best = 0;
    let mut best_d = f32::INFINITY;
    for (n, w) in weights.chunks_exact(dim).enumerate() {
        let d = squared_distance(v, w);
        if d < best_d {
            best_d = d;
            best = n;
        }
    }
    best
}

/// Afferent activity `exp(-|v - w| / alpha)`.
pub fn activity(v: &[f32], w: &[f32], alpha: f64) -> Result<f64> {
    if v.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: v.len(),
        });
    }
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha", "must be > 0"));
    }
    let d: f64 = v
        .iter()
        .zip(w)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt();
    Ok((-d / alpha).exp())
}

/// Index of the maximal activity; the lowest index wins ties.
pub fn elect_winner(activities: &[f64]) -> Result<usize> {
    if activities.is_empty() {
        return Err(Error::Empty("activities"));
    }
    let mut best = 0;
    for (n, &a) in activities.iter().enumerate() {
        if !a.is_finite() {
            return Err(Error::NonFinite("activities"));
        }
        if a > activities[best] {
            best = n;
        }
    }
    Ok(best)
}

/// Gaussian neighborhood `exp(-|p_n - p_s|^2 / (2 sigma^2))`.
pub fn neighborhood(p_n: (usize, usize), p_s: (usize, usize), sigma: f64) -> f64 {
    let dx = p_n.0 as f64 - p_s.0 as f64;
    let dy = p_n.1 as f64 - p_s.1 as f64;
    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
}

/// `x_i * (x_f / x_i)^(t / t_f)`.
pub fn schedule(x_initial: f64, x_final: f64, t: usize, t_final: usize) -> Result<f64> {
    if t_final == 0 {
        return Err(Error::invalid("t_final", "must be >= 1"));
    }
    if !(x_initial > 0.0 && x_final > 0.0) {
        return Err(Error::invalid("schedule", "endpoints must be > 0"));
    }
    if t == 0 {
        return Ok(x_initial);
    }
    if t == t_final {
        return Ok(x_final);
    }
    Ok(x_initial * (x_final / x_initial).powf(t as f64 / t_final as f64))
}

/// Per-neuron learning coefficients `eps * h(n, s)` for one winner, as `f32`.
///
/// Coefficients below the smallest normal `f32` are flushed to zero: the
/// resulting move is under `1e-38` and would only produce denormals.
struct Neighborhood {
    /// Indexed by squared grid distance.
    table: Vec<f32>,
}

impl Neighborhood {
    fn new(width: usize, height: usize, eps: f64, sigma: f64) -> Self {
        let max_d2 = (width - 1) * (width - 1) + (height - 1) * (height - 1);
        let table = (0..=max_d2)
            .map(|d2| {
                let c = (eps * (-(d2 as f64) / (2.0 * sigma * sigma)).exp()) as f32;
                if c < f32::MIN_POSITIVE {
                    0.0
                } else {
                    c
                }
            })
            .collect();
        Neighborhood { table }
    }

    fn apply(&self, grid: &mut SomGrid, v: &[f32], winner: usize) {
        let (sx, sy) = grid.position(winner);
        let dim = grid.dim;
        let width = grid.width;
        for (n, w) in grid.weights.chunks_exact_mut(dim).enumerate() {
            let (x, y) = (n % width, n / width);
            let d2 = x.abs_diff(sx).pow(2) + y.abs_diff(sy).pow(2);
            let c = self.table[d2];
            if c == 0.0 {
                continue;
            }
            for (wi, &vi) in w.iter_mut().zip(v) {
                *wi += c * (vi - *wi);
            }
        }
    }
}

/// Moves every prototype toward `v`: `w_n += eps * h(n, s) * (v - w_n)`.
pub fn update_weights(
    grid: &mut SomGrid,
    v: &[f32],
    winner: usize,
    eps: f64,
    sigma: f64,
) -> Result<()> {
    grid.check_dim(v)?;
    if winner >= grid.len() {
        return Err(Error::invalid("winner", format!("{winner} >= {}", grid.len())));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", "must be > 0"));
    }
    Neighborhood::new(grid.width, grid.height, eps, sigma).apply(grid, v, winner);
    Ok(())
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    pub eps: f64,
    pub sigma: f64,
    /// Mean distance from each input to its winner before the update.
    pub quantization_error: f64,
}

/// Online training for `hp.epochs` epochs over `vectors` (flat, `grid.dim()`
/// values each). Inputs are presented in a fresh seeded order every epoch; the
/// learning rate and neighborhood width decay once per epoch.
pub fn train(
    grid: &mut SomGrid,
    vectors: &[f32],
    hp: &SomHyperParams,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    hp.validate()?;
    let dim = grid.dim;
    if vectors.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if vectors.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: vectors.len() % dim,
        });
    }
    let n = vectors.len() / dim;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::stream(seed, Stream::SomOrder));
    let mut stats = Vec::with_capacity(hp.epochs);
    let mut eps = hp.eps_initial;
    let mut sigma = hp.sigma_initial;
    let mut dists = vec![0.0f32; grid.len()];
    for t in 0..hp.epochs {
        order.shuffle(&mut rng);
        let hood = Neighborhood::new(grid.width, grid.height, eps, sigma);
        let mut qe = 0.0f64;
        for &i in &order {
            let v = &vectors[i * dim..(i + 1) * dim];
            for (d, w) in dists.iter_mut().zip(grid.weights.chunks_exact(dim)) {
                *d = squared_distance(v, w);
            }
            let (s, ds) = argmin(&dists);
            qe += (ds as f64).sqrt();
            hood.apply(grid, v, s);
        }
        if grid.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("som weights"));
        }
        stats.push(EpochStats {
            epoch: t,
            eps,
            sigma,
            quantization_error: qe / n as f64,
        });
        eps = schedule(hp.eps_initial, hp.eps_final, t + 1, hp.epochs)?;
        sigma = schedule(hp.sigma_initial, hp.sigma_final, t + 1, hp.epochs)?;
    }
    Ok(stats)
}

#[inline]
fn argmin(values: &[f32]) -> (usize, f32) {
    let mut best = 0;
    let mut best_v = f32::INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v < best_v {
            best_v = v;
            best = i;
        }
    }
    (best, best_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn activity_examples() {
        assert_eq!(activity(&[0.3, 0.4], &[0.3, 0.4], 1.0).unwrap(), 1.0);
        assert_relative_eq!(activity(&[1.0, 0.0], &[0.0, 0.0], 1.0).unwrap(), 0.367_879_441, epsilon = 1e-9);
        assert_relative_eq!(activity(&[2.0, 0.0], &[0.0, 0.0], 2.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-12);
        assert!(matches!(
            activity(&[1.0], &[1.0, 2.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn winner_examples() {
        assert_eq!(elect_winner(&[0.1, 0.9, 0.3]).unwrap(), 1);
        assert_eq!(elect_winner(&[0.5, 0.5]).unwrap(), 0);
        assert_eq!(elect_winner(&[]), Err(Error::Empty("activities")));
    }

    #[test]
    fn neighborhood_examples() {
        assert_eq!(neighborhood((3, 4), (3, 4), 0.2), 1.0);
        // |p_n - p_s|^2 = 2 sigma^2 with sigma = 1 and a diagonal step.
        assert_relative_eq!(neighborhood((0, 0), (1, 1), 1.0), (-1.0f64).exp(), epsilon = 1e-15);
        assert!(neighborhood((0, 0), (1, 0), 0.01) < 1e-300);
    }

    #[test]
    fn update_examples() {
        let mut g = SomGrid::from_weights(1, 1, 2, vec![0.2, 0.9], 0).unwrap();
        update_weights(&mut g, &[0.7, 0.1], 0, 1.0, 1.0).unwrap();
        for (w, v) in g.weight(0).iter().zip([0.7f32, 0.1]) {
            assert_relative_eq!(*w, v, epsilon = 1e-6);
        }

        let mut g = SomGrid::new(3, 2, 4, 1).unwrap();
        let before = g.clone();
        update_weights(&mut g, &[1.0; 4], 2, 0.0, 3.0).unwrap();
        assert_eq!(g, before);

        let mut g = SomGrid::from_weights(1, 1, 2, vec![0.0, 0.0], 0).unwrap();
        update_weights(&mut g, &[1.0, 1.0], 0, 0.5, 1.0).unwrap();
        assert_eq!(g.weight(0), &[0.5, 0.5]);
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(schedule(1.0, 0.01, 0, 10).unwrap(), 1.0);
        assert_eq!(schedule(1.0, 0.01, 10, 10).unwrap(), 0.01);
        assert_relative_eq!(schedule(1.0, 0.01, 5, 10).unwrap(), 0.1, epsilon = 1e-15);
        assert!(schedule(1.0, 0.01, 0, 0).is_err());
    }

    #[test]
    fn squarest_shapes() {
        assert_eq!(squarest_shape(256), (16, 16));
        assert_eq!(squarest_shape(64), (8, 8));
        assert_eq!(squarest_shape(12), (4, 3));
        assert_eq!(squarest_shape(7), (7, 1));
        assert_eq!(squarest_shape(1), (1, 1));
    }

    #[test]
    fn train_rejects_empty_data() {
        let mut g = SomGrid::new(2, 2, 3, 0).unwrap();
        assert_eq!(
            train(&mut g, &[], &SomHyperParams::default(), 0),
            Err(Error::Empty("training data"))
        );
    }

    #[test]
    fn single_input_is_a_fixed_point() {
        let target = [0.25f32, 0.5, 0.75];
        let mut g = SomGrid::new(3, 3, 3, 11).unwrap();
        let hp = SomHyperParams {
            epochs: 50,
            ..SomHyperParams::default()
        };
        let repeated: Vec<f32> = target.iter().copied().cycle().take(3 * 20).collect();
        train(&mut g, &repeated, &hp, 3).unwrap();
        let s = g.best_matching_unit(&target).unwrap();
        for (w, t) in g.weight(s).iter().zip(&target) {
            assert!((w - t).abs() < 1e-3);
        }
        // eps_i = 1 and sigma_i = 10 pull every neuron onto the input.
        for n in 0..g.len() {
            for (w, t) in g.weight(n).iter().zip(&target) {
                assert!((w - t).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn two_clusters_two_prototypes() {
        // Oracle: with two well-separated blobs, the k-means solution for
        // k = 2 is the pair of blob means.
        let mut rng = seed::rng(99);
        let centers = [(0.2f32, 0.2f32), (0.8f32, 0.7f32)];
        let mut data = Vec::new();
        let mut sums = [(0.0f64, 0.0f64); 2];
        for i in 0..400 {
            let (cx, cy) = centers[i % 2];
            let x = cx + (rng.random::<f32>() - 0.5) * 0.1;
            let y = cy + (rng.random::<f32>() - 0.5) * 0.1;
            sums[i % 2].0 += x as f64;
            sums[i % 2].1 += y as f64;
            data.extend_from_slice(&[x, y]);
        }
        let means = sums.map(|(x, y)| (x / 200.0, y / 200.0));
        let mut g = SomGrid::new(2, 1, 2, 5).unwrap();
        let hp = SomHyperParams {
            sigma_initial: 1.0,
            ..SomHyperParams::default()
        };
        train(&mut g, &data, &hp, 8).unwrap();
        for (mx, my) in means {
            let s = g.best_matching_unit(&[mx as f32, my as f32]).unwrap();
            let w = g.weight(s);
            assert!((w[0] as f64 - mx).abs() < 0.05 && (w[1] as f64 - my).abs() < 0.05, "{w:?} vs {mx},{my}");
        }
        let a = g.best_matching_unit(&[0.2, 0.2]).unwrap();
        let b = g.best_matching_unit(&[0.8, 0.7]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn training_is_reproducible() {
        let mut rng = seed::rng(1);
        let data: Vec<f32> = (0..5 * 200).map(|_| rng.random()).collect();
        let hp = SomHyperParams {
            epochs: 3,
            ..SomHyperParams::default()
        };
        let run = |seed| {
            let mut g = SomGrid::new(4, 3, 5, 21).unwrap();
            train(&mut g, &data, &hp, seed).unwrap();
            g
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    proptest! {
        #[test]
        fn winner_is_nearest_and_alpha_invariant(
            seed in any::<u64>(),
            alpha in 0.05f64..20.0,
        ) {
            let mut rng = seed::rng(seed);
            let g = SomGrid::new(3, 1, 4, seed).unwrap();
            let v: Vec<f32> = (0..4).map(|_| rng.random()).collect();
            let by_activity = elect_winner(&g.activities(&v, alpha).unwrap()).unwrap();
            // Brute-force scan over exact distances.
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for n in 0..3 {
                let d: f64 = g.weight(n).iter().zip(&v).map(|(&w, &x)| (w as f64 - x as f64).powi(2)).sum();
                if d < best_d { best_d = d; best = n; }
            }
            prop_assert_eq!(by_activity, best);
            prop_assert_eq!(g.best_matching_unit(&v).unwrap(), best);
        }

        #[test]
        fn neighborhood_properties(
            a in (0usize..20, 0usize..20),
            b in (0usize..20, 0usize..20),
            c in (0usize..20, 0usize..20),
            sigma in 0.01f64..15.0,
        ) {
            prop_assert_eq!(neighborhood(a, a, sigma), 1.0);
            prop_assert_eq!(neighborhood(a, b, sigma), neighborhood(b, a, sigma));
            let d2 = |p: (usize, usize), q: (usize, usize)| p.0.abs_diff(q.0).pow(2) + p.1.abs_diff(q.1).pow(2);
            if d2(a, b) <= d2(a, c) {
                prop_assert!(neighborhood(a, b, sigma) >= neighborhood(a, c, sigma));
            }
        }

        #[test]
        fn update_contracts_toward_input(
            seed in any::<u64>(),
            eps in 0.0f64..=1.0,
            sigma in 0.05f64..5.0,
            winner in 0usize..6,
        ) {
            let mut rng = seed::rng(seed);
            let mut g = SomGrid::new(3, 2, 5, seed).unwrap();
            let before = g.clone();
            let v: Vec<f32> = (0..5).map(|_| rng.random()).collect();
            update_weights(&mut g, &v, winner, eps, sigma).unwrap();
            for n in 0..g.len() {
                let h = neighborhood(g.position(n), g.position(winner), sigma);
                let factor = 1.0 - eps * h;
                for i in 0..5 {
                    let old = (before.weight(n)[i] - v[i]).abs() as f64;
                    let new = (g.weight(n)[i] - v[i]).abs() as f64;
                    prop_assert!(new <= old + 1e-6);
                    prop_assert!((new - factor * old).abs() <= 1e-6, "n={} i={} {} vs {}", n, i, new, factor * old);
                }
            }
        }

        #[test]
        fn schedule_monotone_with_exact_endpoints(
            xi in 0.02f64..50.0,
            ratio in 0.0001f64..0.999,
            tf in 1usize..40,
        ) {
            let xf = xi * ratio;
            prop_assert_eq!(schedule(xi, xf, 0, tf).unwrap(), xi);
            prop_assert_eq!(schedule(xi, xf, tf, tf).unwrap(), xf);
            for t in 0..tf {
                prop_assert!(schedule(xi, xf, t + 1, tf).unwrap() < schedule(xi, xf, t, tf).unwrap());
            }
        }
    }
}
