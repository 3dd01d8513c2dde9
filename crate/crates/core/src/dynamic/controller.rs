use serde::{Deserialize, Serialize};

use super::{optimize_commands, DynamicsError, OptimizerConfig, SequenceModel};

/// Speed controller producing one pedal command per control tick.
pub trait SpeedController {
    /// Command for this tick, plus the optimizer loss when there is one.
    fn command(
        &mut self,
        s0: &[f64],
        v: f64,
        v_ref: f64,
    ) -> Result<(f64, Option<f64>), DynamicsError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    /// [rad per km/h]
    pub kp: f64,
    /// [rad per km/h s]
    pub ki: f64,
    /// [rad s per km/h]
    pub kd: f64,
}

/// Classic Ziegler-Nichols gains for the reference pedal rig: P-only control
/// at 5 km/h holds a steady oscillation at `Ku = 0.38` with period
/// `Tu = 1.43 s`, giving `kp = 0.6 Ku`, `ki = kp / (Tu / 2)`, `kd = kp Tu / 8`.
impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 0.228,
            ki: 0.319,
            kd: 0.041,
        }
    }
}

/// PID on speed error with derivative on measurement and conditional
/// integration at the command bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Pid {
    pub gains: PidGains,
    pub dt: f64,
    pub limits: [f64; 2],
    /// Command at zero error and zero integral.
    pub bias: f64,
    integral: f64,
    prev_v: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains, dt: f64, limits: [f64; 2], bias: f64) -> Self {
        Self {
            gains,
            dt,
            limits,
            bias,
            integral: 0.0,
            prev_v: None,
        }
    }

    pub fn step(&mut self, v: f64, v_ref: f64) -> f64 {
        let e = v_ref - v;
        let dv = self.prev_v.map_or(0.0, |p| (v - p) / self.dt);
        self.prev_v = Some(v);
        let g = self.gains;
        let raw = self.bias + g.kp * e + g.ki * (self.integral + e * self.dt) - g.kd * dv;
        let saturated_up = raw > self.limits[1] && e > 0.0;
        let saturated_down = raw < self.limits[0] && e < 0.0;
        if !(saturated_up || saturated_down) {
            self.integral += e * self.dt;
        }
        let u = self.bias + g.kp * e + g.ki * self.integral - g.kd * dv;
        u.clamp(self.limits[0], self.limits[1])
    }
}

impl SpeedController for Pid {
    fn command(
        &mut self,
        _s0: &[f64],
        v: f64,
        v_ref: f64,
    ) -> Result<(f64, Option<f64>), DynamicsError> {
        Ok((self.step(v, v_ref), None))
    }
}

/// Receding-horizon controller over a learned sequence model.
pub struct MpcController<M: SequenceModel> {
    pub model: M,
    pub cfg: OptimizerConfig,
    /// Ticks executed from each plan before re-optimizing.
    pub replan_every: usize,
    u_start: f64,
    plan: Vec<f64>,
    cursor: usize,
    loss: f64,
}

impl<M: SequenceModel> MpcController<M> {
    /// The first plan starts from the constant sequence `u_start`.
    pub fn new(model: M, cfg: OptimizerConfig, replan_every: usize, u_start: f64) -> Self {
        Self {
            model,
            cfg,
            replan_every: replan_every.max(1),
            u_start,
            plan: Vec::new(),
            cursor: 0,
            loss: f64::NAN,
        }
    }

    pub fn plan(&self) -> &[f64] {
        &self.plan
    }
}

impl<M: SequenceModel> SpeedController for MpcController<M> {
    fn command(
        &mut self,
        s0: &[f64],
        _v: f64,
        v_ref: f64,
    ) -> Result<(f64, Option<f64>), DynamicsError> {
        if self.plan.is_empty() || self.cursor >= self.replan_every {
            let n = self.model.horizon();
            let warm: Vec<f64> = if self.plan.is_empty() {
                vec![self.u_start; n]
            } else {
                let last = self.plan[n - 1];
                (0..n)
                    .map(|k| *self.plan.get(k + self.cursor).unwrap_or(&last))
                    .collect()
            };
            let opt = optimize_commands(&self.model, s0, v_ref, &warm, &self.cfg)?;
            self.plan = opt.u;
            self.loss = opt.loss;
            self.cursor = 0;
        }
        let u = self.plan[self.cursor];
        self.cursor += 1;
        Ok((u, Some(self.loss)))
    }
}
