//! On-disk artifacts. Binary containers start with a four-byte tag and a
//! little-endian `u32` version; all numbers are little-endian and every
//! real value is stored as its exact `f32` bit pattern, so a write/read
//! round trip is lossless.
//!
//! | tag    | content                                            |
//! |--------|----------------------------------------------------|
//! | `SOMG` | SOM grid: shape, seed, hyper-parameters, weights   |
//! | `SOMF` | feature dump: `N x D` matrix, labels, JSON metadata|
//! | `CNVT` | convnet model: kind, topology, parameters, state   |
//! | `SNNK` | spiking network: topology JSON and both kernels    |
//!
//! Neuron label tables are JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use somlab_core::nn::{AdadeltaState, Param};
use somlab_core::scae::{CnnBaselineModel, ScaeConfig, ScaeModel};
use somlab_core::snn::{SnnNetwork, SnnTopology, SpikingConv};
use somlab_core::{FeatureSet, NeuronLabel, SomGrid, SomHyperParams, Split, Tensor};
use thiserror::Error;

pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a {expected} file (tag {found:?})")]
    BadTag { expected: &'static str, found: [u8; 4] },
    #[error("unsupported {kind} version {found}, this build reads {VERSION}")]
    UnsupportedVersion { kind: &'static str, found: u32 },
    #[error("file ends early")]
    Truncated,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid content: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] somlab_core::Error),
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| FormatError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn header(tag: &[u8; 4]) -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(tag);
        w.u32(VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f32s(&mut self, v: &[f32]) {
        self.0.reserve(4 * v.len());
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.0.extend_from_slice(v);
    }

    fn dims(&mut self, dims: &[usize]) {
        self.u32(dims.len() as u32);
        for &d in dims {
            self.u32(d as u32);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], tag: &[u8; 4], kind: &'static str) -> Result<Self> {
        let mut r = Reader { buf };
        let found: [u8; 4] = r.take(4)?.try_into().unwrap();
        if &found != tag {
            return Err(FormatError::BadTag { expected: kind, found });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion { kind, found: version });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(FormatError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(FormatError::Truncated)?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn str(&mut self) -> Result<&'a str> {
        std::str::from_utf8(self.bytes()?).map_err(|e| FormatError::Invalid(e.to_string()))
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.u32().map(|d| d as usize)).collect()
    }

    fn finish(self) -> Result<()> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

/// A trained map with the schedule that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCheckpoint {
    pub grid: SomGrid,
    pub hyper: SomHyperParams,
}

impl GridCheckpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.grid;
        let mut w = Writer::header(b"SOMG");
        w.u32(g.width() as u32);
        w.u32(g.height() as u32);
        w.u32(g.dim() as u32);
        w.u64(g.seed());
        let h = &self.hyper;
        for v in [h.eps_initial, h.eps_final, h.sigma_initial, h.sigma_final, h.alpha] {
            w.f64(v);
        }
        w.u64(h.epochs as u64);
        w.f32s(g.weights());
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, b"SOMG", "SOM grid")?;
        let (width, height, dim) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let seed = r.u64()?;
        let hyper = SomHyperParams {
            eps_initial: r.f64()?,
            eps_final: r.f64()?,
            sigma_initial: r.f64()?,
            sigma_final: r.f64()?,
            alpha: r.f64()?,
            epochs: r.u64()? as usize,
        };
        let n = width.checked_mul(height).and_then(|k| k.checked_mul(dim)).ok_or(FormatError::Truncated)?;
        let weights = r.f32s(n)?;
        r.finish()?;
        Ok(GridCheckpoint {
            grid: SomGrid::from_weights(width, height, dim, weights, seed)?,
            hyper,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Neuron index to class, `null` for neurons no labeled sample reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTable {
    pub version: u32,
    pub neurons: usize,
    pub labels: Vec<Option<u8>>,
    pub subset_fraction: f64,
    pub subset_seed: u64,
}

impl LabelTable {
    pub fn new(labels: &[NeuronLabel], subset_fraction: f64, subset_seed: u64) -> Self {
        LabelTable {
            version: VERSION,
            neurons: labels.len(),
            labels: labels.iter().map(|l| l.class()).collect(),
            subset_fraction,
            subset_seed,
        }
    }

    pub fn neuron_labels(&self) -> Vec<NeuronLabel> {
        self.labels
            .iter()
            .map(|l| l.map_or(NeuronLabel::Unlabeled, NeuronLabel::Class))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: LabelTable = serde_json::from_slice(&read_file(path)?)?;
        if t.version != VERSION {
            return Err(FormatError::UnsupportedVersion {
                kind: "label table",
                found: t.version,
            });
        }
        if t.labels.len() != t.neurons || t.labels.iter().flatten().any(|&c| c as usize >= somlab_core::NUM_CLASSES) {
            return Err(FormatError::Invalid("label table entries".into()));
        }
        Ok(t)
    }
}

/// Provenance stored in a feature dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMetadata {
    pub extractor: String,
    pub topology: String,
    pub seed: u64,
    pub split: Split,
    /// Identifies the configuration that produced the features; a cached
    /// dump is reused only when this matches.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub metadata: FeatureMetadata,
    pub features: FeatureSet,
}

impl FeatureDump {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let f = &self.features;
        let mut w = Writer::header(b"SOMF");
        w.u64(f.len() as u64);
        w.u64(f.dim() as u64);
        w.bytes(serde_json::to_string(&self.metadata)?.as_bytes());
        w.f32s(f.data());
        w.0.extend_from_slice(f.labels());
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, b"SOMF", "feature dump")?;
        let (n, d) = (r.u64()? as usize, r.u64()? as usize);
        let metadata = serde_json::from_slice(r.bytes()?)?;
        let data = r.f32s(n.checked_mul(d).ok_or(FormatError::Truncated)?)?;
        let labels = r.take(n)?.to_vec();
        r.finish()?;
        Ok(FeatureDump {
            metadata,
            features: FeatureSet::new(d, data, labels)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// A trained gradient model in `f32`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvnetCheckpoint {
    Autoencoder(ScaeModel<f32>),
    Classifier(CnnBaselineModel<f32>),
}

fn write_params(w: &mut Writer, params: &[&Param<f32>]) {
    w.u32(params.len() as u32);
    for p in params {
        w.dims(p.value.shape());
        w.f32s(p.value.data());
        w.f32s(&p.state.sq_grad);
        w.f32s(&p.state.sq_update);
    }
}

fn read_params(r: &mut Reader<'_>) -> Result<Vec<Param<f32>>> {
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let dims = r.dims()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or(FormatError::Truncated)?;
        let mut p = Param::new(Tensor::from_vec(&dims, r.f32s(n)?)?);
        p.state = AdadeltaState {
            sq_grad: r.f32s(n)?,
            sq_update: r.f32s(n)?,
        };
        out.push(p);
    }
    Ok(out)
}

impl ConvnetCheckpoint {
    pub fn topology(&self) -> String {
        match self {
            ConvnetCheckpoint::Autoencoder(m) => m.topology(),
            ConvnetCheckpoint::Classifier(m) => m.topology(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::header(b"CNVT");
        match self {
            ConvnetCheckpoint::Autoencoder(m) => {
                w.bytes(b"scae");
                w.bytes(m.topology().as_bytes());
                w.bytes(serde_json::to_string(m.config())?.as_bytes());
                write_params(&mut w, &m.params());
            }
            ConvnetCheckpoint::Classifier(m) => {
                w.bytes(b"cnn");
                w.bytes(m.topology().as_bytes());
                w.bytes(serde_json::to_string(&m.encoder.feature_maps())?.as_bytes());
                write_params(&mut w, &m.params());
            }
        }
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, b"CNVT", "convnet checkpoint")?;
        let kind = r.str()?;
        let topology = r.str()?.to_owned();
        let config = r.bytes()?;
        let params = read_params(&mut r)?;
        r.finish()?;
        let ckpt = match kind {
            "scae" => {
                let cfg: ScaeConfig = serde_json::from_slice(config)?;
                let mut m = ScaeModel::new(cfg, 0)?;
                m.load_params(params)?;
                ConvnetCheckpoint::Autoencoder(m)
            }
            "cnn" => {
                let maps: usize = serde_json::from_slice(config)?;
                let mut m = CnnBaselineModel::new(maps, 0)?;
                m.load_params(params)?;
                ConvnetCheckpoint::Classifier(m)
            }
            other => return Err(FormatError::Invalid(format!("unknown model kind {other:?}"))),
        };
        if ckpt.topology() != topology {
            return Err(FormatError::Invalid(format!("topology {topology} does not match {}", ckpt.topology())));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

fn write_kernels(w: &mut Writer, c: &SpikingConv) {
    for v in [c.in_maps(), c.out_maps(), c.kernel(), c.padding()] {
        w.u32(v as u32);
    }
    w.f32s(c.weights());
}

fn read_kernels(r: &mut Reader<'_>) -> Result<SpikingConv> {
    let (i, o, k, p) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let n = i.checked_mul(o).and_then(|v| v.checked_mul(k * k)).ok_or(FormatError::Truncated)?;
    Ok(SpikingConv::from_weights(i, o, k, p, r.f32s(n)?)?)
}

pub fn snn_to_bytes(net: &SnnNetwork) -> Result<Vec<u8>> {
    let mut w = Writer::header(b"SNNK");
    w.bytes(serde_json::to_string(net.topology())?.as_bytes());
    write_kernels(&mut w, &net.conv1);
    write_kernels(&mut w, &net.conv2);
    Ok(w.0)
}

pub fn snn_from_bytes(bytes: &[u8]) -> Result<SnnNetwork> {
    let mut r = Reader::open(bytes, b"SNNK", "spiking network")?;
    let topology: SnnTopology = serde_json::from_slice(r.bytes()?)?;
    let conv1 = read_kernels(&mut r)?;
    let conv2 = read_kernels(&mut r)?;
    r.finish()?;
    Ok(SnnNetwork::from_parts(topology, conv1, conv2)?)
}

pub fn save_snn(net: &SnnNetwork, path: &Path) -> Result<()> {
    write_file(path, &snn_to_bytes(net)?)
}

pub fn load_snn(path: &Path) -> Result<SnnNetwork> {
    snn_from_bytes(&read_file(path)?)
}

/// Binary PGM mosaic of equally sized tiles, each stretched to the full
/// gray range, separated by one-pixel black lines.
pub fn pgm_mosaic(tiles: &[&[f32]], rows: usize, cols: usize, per_line: usize) -> Vec<u8> {
    let per_line = per_line.max(1);
    let lines = tiles.len().div_ceil(per_line).max(1);
    let (w, h) = (per_line * (cols + 1) + 1, lines * (rows + 1) + 1);
    let mut img = vec![0u8; w * h];
    for (t, tile) in tiles.iter().enumerate() {
        let (lo, hi) = tile.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (oy, ox) = ((t / per_line) * (rows + 1) + 1, (t % per_line) * (cols + 1) + 1);
        for y in 0..rows {
            for x in 0..cols {
                img[(oy + y) * w + ox + x] = (((tile[y * cols + x] - lo) / span) * 255.0).round() as u8;
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&img);
    out
}

pub fn save_pgm(path: &Path, tiles: &[&[f32]], rows: usize, cols: usize, per_line: usize) -> Result<()> {
    write_file(path, &pgm_mosaic(tiles, rows, cols, per_line))
}
