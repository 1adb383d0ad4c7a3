use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the saliency pipeline.
#[derive(Debug, Error)]
pub enum DiscError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input to inter-superpixel voting is not region-constant (max deviation {0:e})")]
    NotRegionConstant(f64),
    #[error("training diverged at epoch {epoch} ({stage})")]
    Diverged { epoch: usize, stage: String },
    #[error("no paired samples in {0}")]
    NoPairedSamples(PathBuf),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
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
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = DiscError> = std::result::Result<T, E>;

impl DiscError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DiscError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        DiscError::Image {
            path: path.into(),
            source,
        }
    }
}
