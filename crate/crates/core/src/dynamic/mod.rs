//! Learned task dynamics: a network predicting the task-state sequence that
//! follows a command sequence, and command optimization by backpropagating
//! through it.
//!
//! Task state and command are scalars per step here (car speed in km/h and
//! pedal joint angle in rad); the initial state carries the task state first,
//! followed by whatever sensor features the plant reports.

mod controller;
mod log;
mod model;
mod optimize;
mod rollout;

use serde::{Deserialize, Serialize};

pub use controller::{MpcController, Pid, PidGains, SpeedController};
pub use log::ExperimentLog;
pub use model::{
    train_dynamics, DynamicsDocument, DynamicsModel, DynamicsTrainConfig, TrainReport,
};
pub use optimize::{
    e_adj, loss_and_gradient, mpc_control_step, optimize_commands, MpcStep, Optimized,
    OptimizerConfig,
};
pub use rollout::{collect_rollout, CommandSignal, Dataset, Window};

use crate::nn::{NetError, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("{what} dimension mismatch: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("invalid dynamics configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "dynamics training missed its target: held-out one-step rms {one_step_rms:.4} \
         (limit {threshold}), horizon rms {horizon_rms:.4}, final loss {loss:e}"
    )]
    Training {
        loss: f64,
        one_step_rms: f64,
        horizon_rms: f64,
        threshold: f64,
    },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("experiment log: {0}")]
    Io(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// A plant driven one control tick at a time by a scalar command.
pub trait TaskPlant {
    /// Task state followed by sensor features, observed before the next command.
    fn initial_state(&self) -> Vec<f64>;
    fn task_state(&self) -> f64;
    /// Commands outside these bounds are clamped.
    fn command_limits(&self) -> [f64; 2];
    fn control_dt(&self) -> f64;
    fn apply(&mut self, u: f64) -> Result<(), crate::Error>;
}

/// Maps an initial state and a command sequence to the task states after
/// each command.
pub trait SequenceModel {
    fn horizon(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn predict(&self, s0: &[f64], u: &[f64]) -> Result<Vec<f64>, DynamicsError>;
    /// Gradient of `<dl_ds, predict(s0, u)>` with respect to `u`.
    fn command_gradient(
        &self,
        s0: &[f64],
        u: &[f64],
        dl_ds: &[f64],
    ) -> Result<Vec<f64>, DynamicsError>;
}

impl<M: SequenceModel + ?Sized> SequenceModel for &M {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn predict(&self, s0: &[f64], u: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        (**self).predict(s0, u)
    }
    fn command_gradient(
        &self,
        s0: &[f64],
        u: &[f64],
        dl_ds: &[f64],
    ) -> Result<Vec<f64>, DynamicsError> {
        (**self).command_gradient(s0, u, dl_ds)
    }
}

/// Pedal-control configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicConfig {
    #[serde(rename = "N")]
    pub horizon: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub pid: PidGains,
    /// Ticks executed from each optimized sequence before re-optimizing;
    /// 1 is receding horizon, `N` executes whole sequences.
    #[serde(default = "one")]
    pub replan_every: usize,
    #[serde(default = "default_rollout_s")]
    pub rollout_s: f64,
    /// Seconds between random command targets during data collection.
    #[serde(default = "default_knot_period")]
    pub knot_period: f64,
    #[serde(default)]
    pub model: DynamicsTrainConfig,
}

fn one() -> usize {
    1
}

fn default_rollout_s() -> f64 {
    60.0
}

fn default_knot_period() -> f64 {
    0.5
}

impl Default for DynamicConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            alpha: 1000.0,
            beta: 0.02,
            iterations: 30,
            pid: PidGains::default(),
            replan_every: 1,
            rollout_s: default_rollout_s(),
            knot_period: default_knot_period(),
            model: DynamicsTrainConfig::default(),
        }
    }
}

impl DynamicConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.horizon < 2 || !(self.alpha >= 0.0) || !(self.beta > 0.0) || self.iterations == 0 {
            return Err(DynamicsError::InvalidConfig(
                "need N >= 2, alpha >= 0, beta > 0 and iterations >= 1".into(),
            ));
        }
        if self.replan_every == 0 || self.replan_every > self.horizon {
            return Err(DynamicsError::InvalidConfig(
                "replan_every must be in 1..=N".into(),
            ));
        }
        if !(self.rollout_s > 0.0 && self.knot_period > 0.0) {
            return Err(DynamicsError::InvalidConfig(
                "rollout_s and knot_period must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn optimizer(&self, limits: [f64; 2]) -> OptimizerConfig {
        OptimizerConfig {
            horizon: self.horizon,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            u_min: limits[0],
            u_max: limits[1],
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.model.train
    }
}
