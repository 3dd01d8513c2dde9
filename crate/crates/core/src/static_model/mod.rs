//! Static relation between joint angles, muscle tensions and muscle lengths:
//! command generation, online correction and joint-angle estimation.

mod ekf;
mod model;

pub use ekf::{ekf_step, EkfConfig, EkfDump, EkfEstimator, ObservationMode};
pub use model::{
    init_from_geometry, nominal_command, GridSpec, IntersensoryModel, OnlineConfig, StaticConfig,
};

use crate::nn::NetError;
use crate::plant::PlantError;

#[derive(Debug, thiserror::Error)]
pub enum StaticError {
    #[error("{what} dimension mismatch: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite input")]
    NonFinite,
    #[error("initial training stopped at loss {loss:e}, above threshold {threshold:e}")]
    InitTraining { loss: f64, threshold: f64 },
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("invalid static model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}
