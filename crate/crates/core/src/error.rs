use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus consistency: {0}")]
    CorpusConsistency(String),

    #[error("degenerate anchors: {0}")]
    DegenerateAnchor(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("unsupported container version {found} for {kind} (expected {expected})")]
    Version {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("architecture error at stage {stage}: {message}")]
    Architecture { stage: usize, message: String },

    #[error("input shape error: {0}")]
    Shape(String),

    #[error("degenerate extent: {0}")]
    DegenerateExtent(String),

    #[error("augmentation rejected: {0}")]
    AugmentRejected(String),

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite:?})")]
    Divergence {
        epoch: usize,
        last_finite: Option<usize>,
    },

    #[error("shape-model fingerprint mismatch: checkpoint {checkpoint}, model {model}")]
    ModelMismatch { checkpoint: String, model: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the inputs (files, annotations, corpora)
    /// rather than by the computation itself.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::CorpusConsistency(_)
                | Error::DegenerateAnchor(_)
                | Error::InsufficientData(_)
                | Error::Parse { .. }
                | Error::Version { .. }
                | Error::DegenerateExtent(_)
                | Error::ModelMismatch { .. }
                | Error::EmptyDataset(_)
                | Error::Io { .. }
                | Error::Image { .. }
                | Error::Dimension { .. }
                | Error::Shape(_)
        )
    }
}
