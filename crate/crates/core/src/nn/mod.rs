//! Feature extractor networks.
//!
//! A network is an [`ArchSpec`] layer list ending in `Linear + Softmax`. The
//! full network is trained end to end with softmax cross-entropy; afterwards
//! the final Linear (the prediction layer) is dropped and the remaining layers
//! produce embeddings for the SVM head.

mod arch;
mod checkpoint;
mod model;

use thiserror::Error;

pub use arch::{ArchSpec, LayerSpec, Shape};
pub use model::{Dense, EmbeddingSet, FeatureExtractor, Gradients, TrainConfig};
pub(crate) use model::argmax;

use crate::codec::CodecError;
use crate::data::SampleId;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("loss diverged to {loss} in epoch {epoch}")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("feature extractor already carries training provenance")]
    AlreadyTrained,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("sample id {0} has no embedding")]
    UnknownId(SampleId),
    #[error("embedding contains non-finite values")]
    NonFiniteEmbedding,
    #[error("checkpoint: {0}")]
    Codec(#[from] CodecError),
}
