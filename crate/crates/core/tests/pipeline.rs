use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use somlab_core::dataset::subset_indices;
use somlab_core::labeling::{confusion, evaluate, label_neurons};
use somlab_core::scae::{train_scae, CnnBaselineModel, ScaeConfig, ScaeModel, TrainConfig};
use somlab_core::snn::{train_layerwise, SnnTopology};
use somlab_core::som::{squared_distance, train};
use somlab_core::{seed, FeatureSet, ImageSet, SomGrid, SomHyperParams, SubsetSpec, NUM_CLASSES};

fn clusters(per_class: usize, dim: usize, spread: f32, seed_value: u64) -> FeatureSet {
    let mut rng = seed::rng(seed_value);
    let centers: Vec<Vec<f32>> = (0..NUM_CLASSES).map(|_| (0..dim).map(|_| rng.random()).collect()).collect();
    let noise = Normal::new(0.0f32, spread).unwrap();
    let (mut data, mut labels) = (Vec::new(), Vec::new());
    for i in 0..per_class * NUM_CLASSES {
        let c = i % NUM_CLASSES;
        data.extend(centers[c].iter().map(|&m| m + noise.sample(&mut rng)));
        labels.push(c as u8);
    }
    FeatureSet::new(dim, data, labels).unwrap()
}

/// Digit-like strokes: class `c` draws a bar whose angle depends on `c`.
fn strokes(n: usize, seed_value: u64) -> (Vec<f32>, Vec<u8>) {
    let mut rng = seed::rng(seed_value);
    let (mut px, mut labels) = (vec![0.0f32; n * 784], Vec::new());
    for i in 0..n {
        let c = i % NUM_CLASSES;
        let angle = c as f32 * core::f32::consts::PI / NUM_CLASSES as f32;
        let (cy, cx) = (14.0 + rng.random_range(-2.0..2.0f32), 14.0 + rng.random_range(-2.0..2.0f32));
        for s in -9..=9 {
            let (y, x) = (cy + s as f32 * angle.sin(), cx + s as f32 * angle.cos());
            let (y, x) = (y.round() as usize, x.round() as usize);
            if y < 28 && x < 28 {
                px[i * 784 + y * 28 + x] = 1.0;
            }
        }
        labels.push(c as u8);
    }
    (px, labels)
}

#[test]
fn som_labels_separable_clusters() {
    let train_set = clusters(60, 12, 0.03, 1);
    let test_set = clusters(20, 12, 0.03, 1);
    let mut grid = SomGrid::with_neurons(36, 12, 7).unwrap();
    let hp = SomHyperParams {
        epochs: 5,
        ..SomHyperParams::default()
    };
    let stats = train(&mut grid, train_set.data(), &hp, 7).unwrap();
    assert_eq!(stats.len(), 5);
    let idx = subset_indices(train_set.labels(), &SubsetSpec::new(0.2, 3)).unwrap();
    let labels = label_neurons(&grid, &train_set.select(&idx), hp.alpha).unwrap();
    let acc = evaluate(&grid, &labels, &test_set).unwrap();
    assert!(acc > 0.9, "accuracy {acc}");
    let matrix = confusion(&grid, &labels, &test_set).unwrap();
    assert_eq!(matrix.iter().flatten().sum::<usize>(), test_set.len());
}

#[test]
fn autoencoder_loss_falls_and_codes_have_expected_length() {
    let (px, _) = strokes(40, 2);
    let images = ImageSet::new(28, 28, &px).unwrap();
    let mut model = ScaeModel::<f32>::new(ScaeConfig { feature_maps: 2, ..ScaeConfig::default() }, 5).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        seed: 5,
        ..TrainConfig::default()
    };
    let history = train_scae(&mut model, &images, &cfg, |_| {}).unwrap();
    assert!(history.last().unwrap().loss.total < history[0].loss.total);
    let codes = model.encode(&images).unwrap();
    assert_eq!(codes.len(), 40 * 2 * 16);
    assert!(codes.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn baseline_trunk_matches_autoencoder_code_length() {
    let (px, _) = strokes(3, 4);
    let images = ImageSet::new(28, 28, &px).unwrap();
    let cnn = CnnBaselineModel::<f32>::new(3, 1).unwrap();
    let scae = ScaeModel::<f32>::new(ScaeConfig::plain(3), 1).unwrap();
    assert_eq!(cnn.encode(&images).unwrap().len(), scae.encode(&images).unwrap().len());
}

#[test]
fn spiking_network_trains_and_extracts_deterministically() {
    let (px, _) = strokes(30, 6);
    let images = ImageSet::new(28, 28, &px).unwrap();
    let mut topo = SnnTopology::with_feature_maps(4);
    topo.conv1.maps = 8;
    topo.conv1.stdp.max_passes = 1;
    topo.conv2.stdp.max_passes = 1;
    let (a, reports) = train_layerwise(topo.clone(), &images, 9, |_, _, _| {}).unwrap();
    let (b, _) = train_layerwise(topo, &images, 9, |_, _, _| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(reports.len(), 2);
    let features = a.extract_features(&images).unwrap();
    assert_eq!(features.len(), 30 * a.feature_len(28).unwrap());
    assert_eq!(a.feature_len(28).unwrap(), 4 * 7 * 7);
}

proptest! {
    #[test]
    fn bmu_is_the_nearest_prototype(dim in 1usize..8, k in 1usize..20, s in any::<u64>()) {
        let grid = SomGrid::with_neurons(k, dim, s).unwrap();
        let mut rng = seed::rng(s ^ 1);
        let v: Vec<f32> = (0..dim).map(|_| rng.random()).collect();
        let bmu = grid.best_matching_unit(&v).unwrap();
        let best = (0..k).map(|n| squared_distance(&v, grid.weight(n))).fold(f32::INFINITY, f32::min);
        prop_assert_eq!(squared_distance(&v, grid.weight(bmu)), best);
        prop_assert!((0..bmu).all(|n| squared_distance(&v, grid.weight(n)) > best));
    }

    #[test]
    fn subsets_are_distinct_and_sized(n in 1usize..400, fraction in 0.0f64..=1.0, s in any::<u64>(), stratified: bool) {
        let labels: Vec<u8> = (0..n).map(|i| (i * 7 % NUM_CLASSES) as u8).collect();
        let spec = SubsetSpec { fraction, seed: s, stratified };
        let idx = subset_indices(&labels, &spec).unwrap();
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), idx.len());
        prop_assert!(idx.iter().all(|&i| i < n));
        if stratified {
            for c in 0..NUM_CLASSES as u8 {
                let n_c = labels.iter().filter(|&&l| l == c).count();
                let got = idx.iter().filter(|&&i| labels[i] == c).count();
                prop_assert_eq!(got, (fraction * n_c as f64).round() as usize);
            }
        } else {
            prop_assert_eq!(idx.len(), spec.subset_size(n));
        }
        prop_assert_eq!(&idx, &subset_indices(&labels, &spec).unwrap());
    }
}
