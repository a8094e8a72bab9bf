//! Experiment runner: feature extraction, SOM training, post-labeling and
//! evaluation, repeated over derived seeds; plus sweeps and SOM grid search.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use somlab_core::dataset::subset_indices;
use somlab_core::labeling::{evaluate, label_neurons};
use somlab_core::scae::{train_cnn_baseline, train_scae, CnnBaselineModel, EpochLoss, ScaeModel};
use somlab_core::seed::{self, Stream};
use somlab_core::snn::{train_layerwise, LayerReport, SnnNetwork};
use somlab_core::som::{self, EpochStats};
use somlab_core::{FeatureSet, LabeledDataset, NeuronLabel, SomGrid, SomHyperParams, Split, SubsetSpec};

use crate::config::{DataConfig, ExperimentConfig, ExtractorConfig, FeatureScaling, LabelConfig, SomConfig};
use crate::error::{Error, Result, StageContext};
use crate::formats::{self, ConvnetCheckpoint, FeatureDump, FeatureMetadata, GridCheckpoint, LabelTable};
use crate::idx::MnistFiles;

pub const REPORT_SCHEMA: u32 = 1;

/// Train and test images of one experiment.
#[derive(Debug, Clone)]
pub struct Data {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl Data {
    pub fn load(cfg: &DataConfig) -> Result<Self> {
        let files = cfg.mnist_dir.clone().map(MnistFiles::new).unwrap_or_else(MnistFiles::locate);
        if !files.exists() {
            return Err(Error::MissingData(files.dir));
        }
        let mut train = files.load(Split::Train)?;
        let mut test = files.load(Split::Test)?;
        if let Some(n) = cfg.train_limit {
            train = train.truncated(n);
        }
        if let Some(n) = cfg.test_limit {
            test = test.truncated(n);
        }
        Ok(Data { train, test })
    }
}

/// A trained extractor kept for checkpointing and inspection.
#[derive(Debug, Clone)]
pub enum TrainedExtractor {
    Scae(ScaeModel<f32>),
    Cnn(CnnBaselineModel<f32>),
    Snn(SnnNetwork),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSummary {
    pub kind: String,
    pub topology: String,
    pub feature_dim: usize,
    pub parameter_count: Option<usize>,
    /// Identifies the extractor settings; equal fingerprints share dumps.
    pub fingerprint: String,
    pub from_cache: bool,
    pub seconds: f64,
    #[serde(default)]
    pub gradient_history: Vec<EpochLoss>,
    #[serde(default)]
    pub snn_layers: Vec<LayerReport>,
    /// Test accuracy of the supervised CNN's own classifier.
    #[serde(default)]
    pub classifier_test_accuracy: Option<f64>,
}

/// Scaled train/test features ready for the SOM.
#[derive(Debug, Clone)]
pub struct PreparedFeatures {
    pub train: FeatureSet,
    pub test: FeatureSet,
    pub summary: ExtractorSummary,
    pub model: Option<TrainedExtractor>,
    pub artifacts: Vec<PathBuf>,
}

fn hash_bytes(bytes: &[u8]) -> u64 {
    bytes.chunks(8).fold(0x5EED_F00D_u64, |h, c| {
        let mut word = [0u8; 8];
        word[..c.len()].copy_from_slice(c);
        seed::mix64(h ^ u64::from_le_bytes(word)).wrapping_add(c.len() as u64)
    })
}

/// Stable digest of everything that determines extracted features.
pub fn fingerprint(cfg: &ExperimentConfig) -> String {
    let key = serde_json::json!({
        "extractor": cfg.extractor,
        "train_limit": cfg.data.train_limit,
        "test_limit": cfg.data.test_limit,
        "seed": cfg.seed,
    });
    format!("{}-{:016x}", cfg.extractor.kind(), hash_bytes(key.to_string().as_bytes()))
}

fn image_shape(data: &Data) -> String {
    format!("{}x{}", data.train.rows(), data.train.cols())
}

fn features_of(raw: Vec<f32>, labels: &[u8]) -> Result<FeatureSet> {
    let dim = raw.len() / labels.len().max(1);
    FeatureSet::new(dim, raw, labels.to_vec()).stage("feature extraction")
}

struct Extracted {
    train: FeatureSet,
    test: FeatureSet,
    summary: ExtractorSummary,
    model: Option<TrainedExtractor>,
}

fn extract(cfg: &ExperimentConfig, data: &Data, fp: String) -> Result<Extracted> {
    let start = Instant::now();
    let mut summary = ExtractorSummary {
        kind: cfg.extractor.kind().to_owned(),
        topology: image_shape(data),
        feature_dim: data.train.image_size(),
        parameter_count: None,
        fingerprint: fp,
        from_cache: false,
        seconds: 0.0,
        gradient_history: Vec::new(),
        snn_layers: Vec::new(),
        classifier_test_accuracy: None,
    };
    let (train, test, model) = match &cfg.extractor {
        ExtractorConfig::Raw => (data.train.to_features(), data.test.to_features(), None),
        ExtractorConfig::Scae { model, training } => {
            let mut m = ScaeModel::<f32>::new(*model, cfg.seed).stage("autoencoder setup")?;
            summary.gradient_history = train_scae(&mut m, &data.train.images(), &training.with_seed(cfg.seed), |e| {
                info!("autoencoder epoch {} loss {:.6}", e.epoch + 1, e.loss.total)
            })
            .stage("autoencoder training")?;
            let train = features_of(m.encode(&data.train.images()).stage("feature extraction")?, data.train.labels())?;
            let test = features_of(m.encode(&data.test.images()).stage("feature extraction")?, data.test.labels())?;
            (train, test, Some(TrainedExtractor::Scae(m)))
        }
        ExtractorConfig::Cnn { feature_maps, training } => {
            let mut m = CnnBaselineModel::<f32>::new(*feature_maps, cfg.seed).stage("classifier setup")?;
            summary.gradient_history = train_cnn_baseline(&mut m, &data.train, &training.with_seed(cfg.seed), |e| {
                info!("classifier epoch {} loss {:.6} accuracy {:.4}", e.epoch + 1, e.loss.total, e.accuracy.unwrap_or(0.0))
            })
            .stage("classifier training")?;
            summary.classifier_test_accuracy = Some(m.accuracy(&data.test).stage("classifier evaluation")?);
            let train = features_of(m.encode(&data.train.images()).stage("feature extraction")?, data.train.labels())?;
            let test = features_of(m.encode(&data.test.images()).stage("feature extraction")?, data.test.labels())?;
            (train, test, Some(TrainedExtractor::Cnn(m)))
        }
        ExtractorConfig::Snn { topology } => {
            let (net, reports) = train_layerwise(topology.clone(), &data.train.images(), cfg.seed, |layer, seen, conv| {
                info!("snn layer {layer} stimuli {seen} convergence {conv:.5}")
            })
            .stage("stdp training")?;
            summary.snn_layers = reports;
            let train = features_of(net.extract_features(&data.train.images()).stage("feature extraction")?, data.train.labels())?;
            let test = features_of(net.extract_features(&data.test.images()).stage("feature extraction")?, data.test.labels())?;
            (train, test, Some(TrainedExtractor::Snn(net)))
        }
    };
    match &model {
        Some(TrainedExtractor::Scae(m)) => {
            summary.topology = m.topology();
            summary.parameter_count = Some(m.parameter_count());
        }
        Some(TrainedExtractor::Cnn(m)) => {
            summary.topology = m.topology();
            summary.parameter_count = Some(m.parameter_count());
        }
        Some(TrainedExtractor::Snn(n)) => {
            summary.topology = n.topology().describe(data.train.rows());
            summary.parameter_count = Some(n.conv1.weights().len() + n.conv2.weights().len());
        }
        None => {}
    }
    summary.feature_dim = train.dim();
    summary.seconds = start.elapsed().as_secs_f64();
    Ok(Extracted { train, test, summary, model })
}

fn cache_paths(dir: &Path, fp: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{fp}-train.feat")), dir.join(format!("{fp}-test.feat")))
}

fn load_cached(dir: &Path, fp: &str) -> Option<(FeatureDump, FeatureDump)> {
    let (a, b) = cache_paths(dir, fp);
    if !a.is_file() || !b.is_file() {
        return None;
    }
    match (FeatureDump::load(&a), FeatureDump::load(&b)) {
        (Ok(train), Ok(test)) if train.metadata.fingerprint == fp && test.metadata.fingerprint == fp => Some((train, test)),
        (Err(e), _) | (_, Err(e)) => {
            warn!("ignoring unreadable feature cache {}: {e}", dir.display());
            None
        }
        _ => None,
    }
}

fn scale(scaling: FeatureScaling, train: FeatureSet, test: FeatureSet) -> Result<(FeatureSet, FeatureSet)> {
    match scaling {
        FeatureScaling::None => Ok((train, test)),
        FeatureScaling::MinMax => {
            let ranges = train.column_ranges();
            Ok((
                train.min_max_normalized(&ranges).stage("feature scaling")?,
                test.min_max_normalized(&ranges).stage("feature scaling")?,
            ))
        }
    }
}

/// Trains the configured extractor once (or reuses cached dumps) and
/// returns scaled features for both splits.
pub fn prepare_features(cfg: &ExperimentConfig, data: &Data) -> Result<PreparedFeatures> {
    let fp = fingerprint(cfg);
    let mut artifacts = Vec::new();
    let cache = cfg.feature_cache.as_deref().filter(|_| !matches!(cfg.extractor, ExtractorConfig::Raw));
    let cached = cache.and_then(|dir| load_cached(dir, &fp));
    let extracted = match cached {
        Some((train, test)) => {
            info!("reusing cached features {fp}");
            let (a, b) = cache_paths(cache.expect("cache dir"), &fp);
            artifacts.extend([a, b]);
            Extracted {
                summary: ExtractorSummary {
                    kind: cfg.extractor.kind().to_owned(),
                    topology: train.metadata.topology.clone(),
                    feature_dim: train.features.dim(),
                    parameter_count: None,
                    fingerprint: fp.clone(),
                    from_cache: true,
                    seconds: 0.0,
                    gradient_history: Vec::new(),
                    snn_layers: Vec::new(),
                    classifier_test_accuracy: None,
                },
                train: train.features,
                test: test.features,
                model: None,
            }
        }
        None => {
            let ex = extract(cfg, data, fp.clone())?;
            if let Some(dir) = cache {
                let (a, b) = cache_paths(dir, &fp);
                for (path, features, split) in [(&a, &ex.train, Split::Train), (&b, &ex.test, Split::Test)] {
                    FeatureDump {
                        metadata: FeatureMetadata {
                            extractor: ex.summary.kind.clone(),
                            topology: ex.summary.topology.clone(),
                            seed: cfg.seed,
                            split,
                            fingerprint: fp.clone(),
                        },
                        features: features.clone(),
                    }
                    .save(path)?;
                }
                artifacts.extend([a, b]);
            }
            ex
        }
    };
    let (train, test) = scale(cfg.scaling, extracted.train, extracted.test)?;
    Ok(PreparedFeatures {
        train,
        test,
        summary: extracted.summary,
        model: extracted.model,
        artifacts,
    })
}

/// Trains one SOM on `train` with grid and presentation order seeded by
/// `seed`.
pub fn train_grid(train: &FeatureSet, som_cfg: &SomConfig, seed: u64) -> Result<(SomGrid, Vec<EpochStats>)> {
    let mut grid = SomGrid::with_neurons(som_cfg.neurons, train.dim(), seed).stage("som setup")?;
    let stats = som::train(&mut grid, train.data(), &som_cfg.hyper, seed).stage("som training")?;
    Ok((grid, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutcome {
    pub labels: Vec<NeuronLabel>,
    pub accuracy: f64,
    pub subset_seed: u64,
    pub subset_size: usize,
}

/// Labels `grid` from a subset of `train` drawn with `seed`, then scores
/// it on `test`.
pub fn label_and_evaluate(
    grid: &SomGrid,
    train: &FeatureSet,
    test: &FeatureSet,
    labels: &LabelConfig,
    alpha: f64,
    seed: u64,
) -> Result<LabelOutcome> {
    let subset_seed = seed::stream(seed, Stream::LabelSubset);
    let spec = SubsetSpec {
        fraction: labels.fraction,
        seed: subset_seed,
        stratified: labels.stratified,
    };
    let idx = subset_indices(train.labels(), &spec).stage("label subset")?;
    let subset = train.select(&idx);
    let neuron_labels = label_neurons(grid, &subset, alpha).stage("labeling")?;
    let accuracy = evaluate(grid, &neuron_labels, test).stage("evaluation")?;
    Ok(LabelOutcome {
        labels: neuron_labels,
        accuracy,
        subset_seed,
        subset_size: idx.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    /// `derive(master seed, repetition)`; replays this repetition alone.
    pub seed: u64,
    pub accuracy: f64,
    pub labeled_neurons: usize,
    pub subset_size: usize,
    pub quantization_error: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub extractor_secs: f64,
    pub som_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub extractor: ExtractorSummary,
    pub repetitions: Vec<RepetitionResult>,
    pub mean_accuracy: f64,
    /// Sample standard deviation over repetitions.
    pub std_accuracy: f64,
    pub timings: Timings,
    pub artifacts: Vec<PathBuf>,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ExperimentReport {
    /// Copy with every wall-clock measurement zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.timings = Timings::default();
        r.extractor.seconds = 0.0;
        r
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.repetitions.iter().map(|r| r.accuracy).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    formats::write_file(path, text.as_bytes()).map_err(Error::from)
}

fn square_side(dim: usize) -> Option<usize> {
    let s = (dim as f64).sqrt().round() as usize;
    (s * s == dim).then_some(s)
}

fn save_extractor(model: &TrainedExtractor, dir: &Path, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    let kernels: Vec<Vec<f32>> = match model {
        TrainedExtractor::Scae(m) => {
            let path = dir.join("extractor.cnvt");
            ConvnetCheckpoint::Autoencoder(m.clone()).save(&path)?;
            artifacts.push(path);
            m.encoder.conv1.weight.value.data().chunks(25).map(<[f32]>::to_vec).collect()
        }
        TrainedExtractor::Cnn(m) => {
            let path = dir.join("extractor.cnvt");
            ConvnetCheckpoint::Classifier(m.clone()).save(&path)?;
            artifacts.push(path);
            m.encoder.conv1.weight.value.data().chunks(25).map(<[f32]>::to_vec).collect()
        }
        TrainedExtractor::Snn(n) => {
            let path = dir.join("extractor.snnk");
            formats::save_snn(n, &path)?;
            artifacts.push(path);
            let k2 = n.conv1.kernel() * n.conv1.kernel();
            n.conv1
                .weights()
                .chunks(n.conv1.in_maps() * k2)
                .map(|w| {
                    let (on, rest) = w.split_at(k2);
                    match rest.get(..k2) {
                        Some(off) => on.iter().zip(off).map(|(a, b)| a - b).collect(),
                        None => on.to_vec(),
                    }
                })
                .collect()
        }
    };
    if let Some(side) = kernels.first().and_then(|k| square_side(k.len())) {
        let path = dir.join("kernels.pgm");
        let tiles: Vec<&[f32]> = kernels.iter().map(Vec::as_slice).collect();
        formats::save_pgm(&path, &tiles, side, side, 16)?;
        artifacts.push(path);
    }
    Ok(())
}

/// Repetition loop over already prepared features.
pub fn run_with_features(cfg: &ExperimentConfig, prepared: &PreparedFeatures) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let out = cfg.output_dir.as_deref();
    let mut artifacts = prepared.artifacts.clone();
    if let Some(dir) = out {
        let path = dir.join("config.json");
        write_text(&path, &cfg.to_json())?;
        artifacts.push(path);
        if let Some(model) = &prepared.model {
            save_extractor(model, dir, &mut artifacts)?;
        }
    }
    let mut reps = Vec::with_capacity(cfg.repetitions);
    for r in 0..cfg.repetitions {
        let rep_seed = seed::derive(cfg.seed, r as u64);
        let (grid, stats) = train_grid(&prepared.train, &cfg.som, rep_seed)?;
        let outcome = label_and_evaluate(&grid, &prepared.train, &prepared.test, &cfg.labels, cfg.som.hyper.alpha, rep_seed)?;
        info!("{} repetition {} accuracy {:.4}", cfg.name, r + 1, outcome.accuracy);
        if let Some(dir) = out {
            let g = dir.join(format!("grids/rep-{r:02}.somg"));
            GridCheckpoint {
                grid: grid.clone(),
                hyper: cfg.som.hyper,
            }
            .save(&g)?;
            let l = dir.join(format!("labels/rep-{r:02}.json"));
            LabelTable::new(&outcome.labels, cfg.labels.fraction, outcome.subset_seed).save(&l)?;
            artifacts.extend([g, l]);
            if r == 0 {
                if let Some(side) = square_side(grid.dim()) {
                    let p = dir.join("prototypes.pgm");
                    let tiles: Vec<&[f32]> = (0..grid.len()).map(|n| grid.weight(n)).collect();
                    formats::save_pgm(&p, &tiles, side, side, grid.width())?;
                    artifacts.push(p);
                }
            }
        }
        reps.push(RepetitionResult {
            repetition: r,
            seed: rep_seed,
            accuracy: outcome.accuracy,
            labeled_neurons: outcome.labels.iter().filter(|l| l.class().is_some()).count(),
            subset_size: outcome.subset_size,
            quantization_error: stats.last().map_or(f64::NAN, |s| s.quantization_error),
        });
    }
    let (mean, std) = mean_std(&reps.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let som_secs = start.elapsed().as_secs_f64();
    let mut report = ExperimentReport {
        schema_version: REPORT_SCHEMA,
        config: cfg.clone(),
        extractor: prepared.summary.clone(),
        repetitions: reps,
        mean_accuracy: mean,
        std_accuracy: std,
        timings: Timings {
            extractor_secs: prepared.summary.seconds,
            som_secs,
            total_secs: prepared.summary.seconds + som_secs,
        },
        artifacts,
    };
    if let Some(dir) = out {
        let path = dir.join("report.json");
        report.artifacts.push(path.clone());
        report.save(&path)?;
    }
    Ok(report)
}

/// Full protocol: extractor, features, then `repetitions` SOM runs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = Data::load(&cfg.data)?;
    run_on(cfg, &data)
}

/// [`run_experiment`] on already loaded data.
pub fn run_on(cfg: &ExperimentConfig, data: &Data) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let prepared = prepare_features(cfg, data)?;
    let mut report = run_with_features(cfg, &prepared)?;
    report.timings.total_secs = start.elapsed().as_secs_f64();
    if let Some(dir) = &cfg.output_dir {
        report.save(&dir.join("report.json"))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    FeatureMaps,
    SomNeurons,
    LabelFraction,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::FeatureMaps => "feature_maps",
            SweepAxis::SomNeurons => "som_neurons",
            SweepAxis::LabelFraction => "label_fraction",
        }
    }

    /// `base` with the axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} needs a positive integer, got {value}", self.name())))
            }
        };
        match self {
            SweepAxis::FeatureMaps => cfg.extractor.set_feature_maps(count()?)?,
            SweepAxis::SomNeurons => cfg.som.neurons = count()?,
            SweepAxis::LabelFraction => cfg.labels.fraction = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "feature_maps" => Ok(SweepAxis::FeatureMaps),
            "som_neurons" => Ok(SweepAxis::SomNeurons),
            "label_fraction" => Ok(SweepAxis::LabelFraction),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub report: Option<ExperimentReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub axis: SweepAxis,
    pub base: ExperimentConfig,
    pub points: Vec<SweepPoint>,
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub status: String,
    pub repetitions: usize,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    pub error: Option<String>,
}

/// Column order of `sweep.csv`.
pub const SWEEP_COLUMNS: [&str; 7] = ["axis", "value", "status", "repetitions", "mean_accuracy", "std_accuracy", "error"];

impl SweepReport {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.points
            .iter()
            .map(|p| SweepRow {
                axis: self.axis.name().to_owned(),
                value: p.value,
                status: if p.report.is_some() { "ok" } else { "failed" }.to_owned(),
                repetitions: p.report.as_ref().map_or(0, |r| r.repetitions.len()),
                mean_accuracy: p.report.as_ref().map(|r| r.mean_accuracy),
                std_accuracy: p.report.as_ref().map(|r| r.std_accuracy),
                error: p.error.clone(),
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(SWEEP_COLUMNS)?;
        for row in self.rows() {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let csv_path = dir.join("sweep.csv");
        let json_path = dir.join("sweep.json");
        write_text(&csv_path, &self.to_csv()?)?;
        write_text(&json_path, &serde_json::to_string_pretty(self)?)?;
        Ok((csv_path, json_path))
    }
}

/// Runs `base` once per value of `axis`. Failing points are recorded and
/// the sweep continues. Features are extracted once unless the axis
/// changes the extractor.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepReport> {
    if values.is_empty() {
        warn!("empty {axis} sweep");
        let report = SweepReport {
            schema_version: REPORT_SCHEMA,
            axis,
            base: base.clone(),
            points: Vec::new(),
        };
        if let Some(dir) = &base.output_dir {
            report.write(dir)?;
        }
        return Ok(report);
    }
    base.validate()?;
    let data = Data::load(&base.data)?;
    run_sweep_on(base, axis, values, &data)
}

/// [`run_sweep`] on already loaded data.
pub fn run_sweep_on(base: &ExperimentConfig, axis: SweepAxis, values: &[f64], data: &Data) -> Result<SweepReport> {
    let shared = match axis {
        SweepAxis::FeatureMaps => None,
        _ => Some(prepare_features(base, data).map_err(|e| e.to_string())),
    };
    let mut points = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let run = || -> std::result::Result<ExperimentReport, String> {
            let mut cfg = axis.apply(base, value).map_err(|e| e.to_string())?;
            cfg.name = format!("{}-{}-{value}", base.name, axis.name());
            cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(format!("point-{i:02}")));
            match &shared {
                Some(Ok(prepared)) => run_with_features(&cfg, prepared).map_err(|e| e.to_string()),
                Some(Err(e)) => Err(e.clone()),
                None => run_on(&cfg, data).map_err(|e| e.to_string()),
            }
        };
        let point = match run() {
            Ok(report) => SweepPoint {
                value,
                report: Some(report),
                error: None,
            },
            Err(e) => {
                warn!("sweep point {axis}={value} failed: {e}");
                SweepPoint {
                    value,
                    report: None,
                    error: Some(e),
                }
            }
        };
        points.push(point);
    }
    let report = SweepReport {
        schema_version: REPORT_SCHEMA,
        axis,
        base: base.clone(),
        points,
    };
    if let Some(dir) = &base.output_dir {
        report.write(dir)?;
    }
    Ok(report)
}

/// Candidate values per SOM hyper-parameter; the search covers their
/// Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGrid {
    pub eps_initial: Vec<f64>,
    pub eps_final: Vec<f64>,
    pub sigma_initial: Vec<f64>,
    pub sigma_final: Vec<f64>,
    pub alpha: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl HyperGrid {
    pub fn single(h: SomHyperParams) -> Self {
        HyperGrid {
            eps_initial: vec![h.eps_initial],
            eps_final: vec![h.eps_final],
            sigma_initial: vec![h.sigma_initial],
            sigma_final: vec![h.sigma_final],
            alpha: vec![h.alpha],
            epochs: vec![h.epochs],
        }
    }

    /// Combinations in row-major order (last field varies fastest).
    pub fn combinations(&self) -> Vec<SomHyperParams> {
        let mut out = Vec::new();
        for &eps_initial in &self.eps_initial {
            for &eps_final in &self.eps_final {
                for &sigma_initial in &self.sigma_initial {
                    for &sigma_final in &self.sigma_final {
                        for &alpha in &self.alpha {
                            for &epochs in &self.epochs {
                                out.push(SomHyperParams {
                                    eps_initial,
                                    eps_final,
                                    sigma_initial,
                                    sigma_final,
                                    alpha,
                                    epochs,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSearchSpec {
    pub grid: HyperGrid,
    /// Share of the training features held out for scoring.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "default_search_repetitions")]
    pub repetitions: usize,
}

fn default_validation_fraction() -> f64 {
    0.1
}

fn default_search_repetitions() -> usize {
    1
}

impl GridSearchSpec {
    pub fn new(grid: HyperGrid) -> Self {
        GridSearchSpec {
            grid,
            validation_fraction: default_validation_fraction(),
            repetitions: default_search_repetitions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub hyper: SomHyperParams,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub rows: Vec<GridRow>,
    pub best: SomHyperParams,
    pub best_accuracy: f64,
}

impl GridSearchReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["eps_initial", "eps_final", "sigma_initial", "sigma_final", "alpha", "epochs", "accuracy", "error"])?;
        for r in &self.rows {
            let h = &r.hyper;
            w.write_record([
                h.eps_initial.to_string(),
                h.eps_final.to_string(),
                h.sigma_initial.to_string(),
                h.sigma_final.to_string(),
                h.alpha.to_string(),
                h.epochs.to_string(),
                r.accuracy.map_or_else(String::new, |a| a.to_string()),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Splits `n` indices into `(fit, validation)` with the validation stream
/// of `seed`.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("validation_fraction {fraction} not in (0, 1)")));
    }
    if n < 2 {
        return Err(Error::Config("grid search needs at least two training vectors".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut seed::rng(seed::stream(seed, Stream::Validation)));
    let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let fit = idx.split_off(n_val);
    Ok((fit, idx))
}

/// Scores every combination of `spec.grid` on a held-out slice of `train`.
/// Labels come from a subset of the remaining vectors, so labeling and
/// scoring never share data. Ties go to the first combination.
pub fn grid_search_features(train: &FeatureSet, cfg: &ExperimentConfig, spec: &GridSearchSpec) -> Result<GridSearchReport> {
    let combos = spec.grid.combinations();
    if combos.is_empty() {
        return Err(Error::Config("empty hyper-parameter grid".into()));
    }
    if spec.repetitions == 0 {
        return Err(Error::Config("grid search repetitions must be >= 1".into()));
    }
    let (fit_idx, val_idx) = validation_split(train.len(), spec.validation_fraction, cfg.seed)?;
    let fit = train.select(&fit_idx);
    let val = train.select(&val_idx);
    let mut rows = Vec::with_capacity(combos.len());
    let mut best: Option<(SomHyperParams, f64)> = None;
    for hyper in combos {
        let som_cfg = SomConfig {
            neurons: cfg.som.neurons,
            hyper,
        };
        let score = || -> Result<f64> {
            let mut accs = Vec::with_capacity(spec.repetitions);
            for r in 0..spec.repetitions {
                let rep_seed = seed::derive(cfg.seed, r as u64);
                let (grid, _) = train_grid(&fit, &som_cfg, rep_seed)?;
                accs.push(label_and_evaluate(&grid, &fit, &val, &cfg.labels, hyper.alpha, rep_seed)?.accuracy);
            }
            Ok(mean_std(&accs).0)
        };
        match score() {
            Ok(acc) => {
                info!("grid point {hyper:?} accuracy {acc:.4}");
                if best.is_none_or(|(_, b)| acc > b) {
                    best = Some((hyper, acc));
                }
                rows.push(GridRow {
                    hyper,
                    accuracy: Some(acc),
                    error: None,
                });
            }
            Err(e) => rows.push(GridRow {
                hyper,
                accuracy: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let (best, best_accuracy) = best.ok_or_else(|| Error::Config("every grid point failed".into()))?;
    Ok(GridSearchReport { rows, best, best_accuracy })
}

/// Grid search on the training features of `cfg`.
pub fn grid_search_som(cfg: &ExperimentConfig, spec: &GridSearchSpec) -> Result<GridSearchReport> {
    cfg.validate()?;
    let data = Data::load(&cfg.data)?;
    let prepared = prepare_features(cfg, &data)?;
    let report = grid_search_features(&prepared.train, cfg, spec)?;
    if let Some(dir) = &cfg.output_dir {
        write_text(&dir.join("grid_search.csv"), &report.to_csv()?)?;
        write_text(&dir.join("grid_search.json"), &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}
