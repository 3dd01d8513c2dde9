//! Ground-truth simulator: a planar tendon-driven joint chain with series
//! elastic muscles, motor heating, and a pedal-driven car.

mod body;
mod car;
mod config;
mod geometry;
mod log;

pub use body::{
    elastic_tension, ElasticElementParams, Environment, MusclePlant, PlantState, MAX_DT,
};
pub use car::{dead, CarModel, CarState};
pub use config::{
    Attachment, CarCoupling, CarParams, JointConfig, JointLoad, MuscleConfig, PlantConfig,
    ThermalParams, PLANT_FORMAT_VERSION,
};
pub use geometry::{MuscleGeometry, JACOBIAN_STEP};
pub use log::TrajectoryLog;

#[derive(Debug, thiserror::Error)]
pub enum PlantError {
    #[error("joint {joint} angle {angle} outside limits {limits:?}")]
    OutOfRange {
        joint: usize,
        angle: f64,
        limits: [f64; 2],
    },
    #[error("{what} dimension mismatch: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("plant fault: {0}")]
    Fault(String),
    #[error("step size {0} outside (0, 0.02] s")]
    InvalidStep(f64),
    #[error("invalid plant description: {0}")]
    InvalidConfig(String),
    #[error("plant description: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trajectory log: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
