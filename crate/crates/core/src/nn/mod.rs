//! Minimal dense networks shared by the static and dynamic modules.

mod mlp;
mod scaled;
mod train;

pub use mlp::{Gradients, Mlp};
pub use scaled::{FeatureScale, ModelDocument, Normalization, ScaledNetwork, MODEL_FORMAT_VERSION};
pub use train::{mse, train, Sample, TrainConfig};

pub(crate) use train::{sgd_step, GradBuffer};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    InputDimension { expected: usize, got: usize },
    #[error("output dimension mismatch: expected {expected}, got {got}")]
    OutputDimension { expected: usize, got: usize },
    #[error("invalid network shape: {0}")]
    InvalidShape(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model serialization: {0}")]
    Json(#[from] serde_json::Error),
}
