//! Learned control of a simulated tendon-driven body: a static
//! angle/tension/length model, a learned task-dynamics model used for
//! receding-horizon command optimization, and fast muscle reflexes.

pub mod dynamic;
pub mod harness;
pub mod nn;
pub mod plant;
pub mod reflex;
pub mod rig;
pub mod static_model;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Dynamics(#[from] dynamic::DynamicsError),
    #[error(transparent)]
    Net(#[from] nn::NetError),
    #[error(transparent)]
    Plant(#[from] plant::PlantError),
    #[error(transparent)]
    Reflex(#[from] reflex::ReflexError),
    #[error(transparent)]
    Static(#[from] static_model::StaticError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
