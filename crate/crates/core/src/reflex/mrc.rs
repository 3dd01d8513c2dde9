//! Muscle relaxation control.
//!
//! While a pose is held, muscles are elongated one at a time in ascending
//! order of necessary tension, so antagonists carrying only internal force go
//! first. A muscle is left once its tension falls below `f_min`. If the pose
//! drifts more than `angle_threshold` from where relaxation started, the last
//! increment is undone and relaxation freezes. When motion resumes the offsets
//! are wound back in descending order of necessary tension.
//!
//! Drift bound: one increment changes the commanded length by `rate`, which
//! moves a joint by at most about `rate / min|G_ij|` over the spanning
//! entries. Drift is checked every tick and the offending increment rolled
//! back, so `|theta - theta_hold|` stays within `angle_threshold` plus that
//! one-tick amount.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrcMode {
    Static,
    Moving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationState {
    pub dl_relax: Vec<f64>,
    pub order: Vec<usize>,
    /// Position in `order`; `None` once every muscle has been visited.
    pub active_index: Option<usize>,
    pub theta_hold: Option<Vec<f64>>,
    pub mode: MrcMode,
    /// Elongation per control tick [m].
    pub rate: f64,
    pub angle_threshold: f64,
    /// Tension below which the active muscle is considered relaxed [N].
    pub f_min: Vec<f64>,
    /// Muscles this instance may relax.
    pub muscles: Vec<usize>,
    /// Joints whose drift is watched.
    pub joints: Vec<usize>,
    pub frozen: bool,
    last_increment: Option<usize>,
}

impl RelaxationState {
    /// Idle state over all muscles and joints.
    pub fn new(
        num_muscles: usize,
        num_joints: usize,
        rate: f64,
        angle_threshold: f64,
        f_min: Vec<f64>,
    ) -> Self {
        Self {
            dl_relax: vec![0.0; num_muscles],
            order: Vec::new(),
            active_index: Some(0),
            theta_hold: None,
            mode: MrcMode::Moving,
            rate,
            angle_threshold,
            f_min,
            muscles: (0..num_muscles).collect(),
            joints: (0..num_joints).collect(),
            frozen: false,
            last_increment: None,
        }
    }

    pub fn with_group(mut self, muscles: Vec<usize>, joints: Vec<usize>) -> Self {
        self.muscles = muscles;
        self.joints = joints;
        self
    }

    pub fn active_muscle(&self) -> Option<usize> {
        self.active_index.and_then(|i| self.order.get(i).copied())
    }

    fn drift_exceeded(&self, theta: &[f64], constrained: &[bool]) -> bool {
        let Some(hold) = &self.theta_hold else {
            return false;
        };
        self.joints
            .iter()
            .filter(|&&j| !constrained.get(j).copied().unwrap_or(false))
            .any(|&j| (theta[j] - hold[j]).abs() > self.angle_threshold)
    }

    fn roll_back(&mut self) {
        if let Some(m) = self.last_increment {
            self.dl_relax[m] = (self.dl_relax[m] - self.rate).max(0.0);
            if self.dl_relax[m] == 0.0 {
                self.last_increment = None;
            }
        }
    }
}

/// One control tick. Returns the next state and the offsets to add to the
/// commanded lengths.
pub fn mrc_step(
    state: &RelaxationState,
    f: &[f64],
    theta: &[f64],
    x_necessary: &[f64],
    constrained: &[bool],
) -> (RelaxationState, Vec<f64>) {
    let mut s = state.clone();
    match s.mode {
        MrcMode::Moving => {
            if s.theta_hold.is_some() {
                s.theta_hold = None;
                s.order.clear();
                s.active_index = Some(0);
                s.frozen = false;
                s.last_increment = None;
            }
            let mut unwind: Vec<usize> = s.muscles.clone();
            unwind.sort_by(|&a, &b| x_necessary[b].total_cmp(&x_necessary[a]));
            if let Some(&m) = unwind.iter().find(|&&m| s.dl_relax[m] > 0.0) {
                s.dl_relax[m] = (s.dl_relax[m] - s.rate).max(0.0);
            }
        }
        MrcMode::Static => {
            if s.theta_hold.is_none() {
                s.theta_hold = Some(theta.to_vec());
                s.order = s.muscles.clone();
                s.order
                    .sort_by(|&a, &b| x_necessary[a].total_cmp(&x_necessary[b]));
                s.active_index = if s.order.is_empty() { None } else { Some(0) };
                s.frozen = false;
                s.last_increment = None;
            }
            if s.drift_exceeded(theta, constrained) {
                s.roll_back();
                s.frozen = true;
            } else if !s.frozen {
                while let Some(m) = s.active_muscle() {
                    if f[m] < s.f_min[m] {
                        let next = s.active_index.unwrap() + 1;
                        s.active_index = (next < s.order.len()).then_some(next);
                    } else {
                        break;
                    }
                }
                if let Some(m) = s.active_muscle() {
                    s.dl_relax[m] += s.rate;
                    s.last_increment = Some(m);
                }
            }
        }
    }
    let out = s.dl_relax.clone();
    (s, out)
}
