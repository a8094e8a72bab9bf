use std::path::PathBuf;

use thiserror::Error;

use crate::formats::FormatError;
use crate::idx::IdxError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("MNIST files not found in {0}; run scripts/fetch-mnist.sh or set SOMLAB_MNIST_DIR")]
    MissingData(PathBuf),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    /// A failure inside one stage of an experiment.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: somlab_core::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T, somlab_core::Error> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| Error::Stage { stage, source })
    }
}
